#!/usr/bin/env python3
"""Regenerate the shipped fixture corpus under fixtures/.

Each fixture gets <name>.problem.json plus <name>.values.json with a
deterministic nondegenerate sample (seed fixed per fixture).
"""

import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from diffcone.fixtures import gradient_fixtures  # noqa: E402
from diffcone.io import (  # noqa: E402
    dump_problem_document,
    dump_values,
    problem_to_document,
)


def main():
    out_dir = pathlib.Path(__file__).resolve().parents[1] / "fixtures"
    out_dir.mkdir(exist_ok=True)
    for i, fx in enumerate(gradient_fixtures()):
        doc = problem_to_document(fx.problem)
        (out_dir / f"{fx.name}.problem.json").write_text(
            dump_problem_document(doc))
        values = fx.sample(np.random.default_rng(1000 + i))
        (out_dir / f"{fx.name}.values.json").write_text(
            dump_values({k: np.asarray(v) for k, v in values.items()}))
        print(f"wrote {fx.name}")


if __name__ == "__main__":
    main()
