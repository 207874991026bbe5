"""Grid search on the small test stream, ranked by old-vs-new weighted error."""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from aoscl import metrics
from aoscl.datastream import preset
from aoscl.errors import SpecError
from aoscl.harness.runner import RunConfig, pretrained_for, run

OLD_TASK_WEIGHT = 2.0


@dataclass
class SweepResult:
    best: RunConfig
    leaderboard: list = field(default_factory=list)  # dicts sorted by score, ascending

    def to_json(self) -> dict:
        return {"best": self.best.key(), "leaderboard": self.leaderboard}


def expand_grid(base: RunConfig, grid: dict) -> list[RunConfig]:
    """Cartesian product of ``grid`` values applied on top of ``base``."""
    if not grid or any(len(v) == 0 for v in grid.values()):
        raise SpecError("sweep grid is empty")
    names = sorted(grid)
    unknown = [n for n in names if n not in RunConfig.__dataclass_fields__]
    if unknown:
        raise SpecError(f"unknown sweep parameters: {', '.join(unknown)}")
    configs = [replace(base, **dict(zip(names, combo))) for combo in itertools.product(*(grid[n] for n in names))]
    unique = {c.key(): c for c in configs}
    return list(unique.values())


def _score(config: RunConfig, spec=None, pre=None) -> dict:
    rec = run(replace(config, output_dir=None), pre=pre, spec=spec, eval_split="validation")
    if not rec.ok:
        return {"key": config.key(), "score": float("inf"), "status": rec.status, "error": rec.error}
    errs = rec.summary["per_task_error"]
    old, new = errs["0"], errs[str(rec.task_order[-1])]
    return {
        "key": config.key(),
        "score": metrics.weighted_awer(old, new, OLD_TASK_WEIGHT),
        "old_error": old,
        "new_error": new,
        "status": rec.status,
    }


def sweep(base: RunConfig, grid: dict, jobs: int = 1, out_dir=None, spec=None, pre=None) -> SweepResult:
    """Run every grid point on the ``test`` stream; lower weighted error is better.

    ``spec`` and ``pre`` override the stream and initial model (both default
    to the ``test`` preset). Ties are broken by config key so the outcome
    never depends on job completion order.
    """
    base = replace(base, stream="test", output_dir=None)
    configs = expand_grid(base, grid)
    spec = spec or preset("test", base.seed)
    pre = pre or pretrained_for(base, spec)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_score, configs, [spec] * len(configs), [pre] * len(configs)))
    else:
        rows = [_score(c, spec, pre) for c in configs]
    by_key = {c.key(): c for c in configs}
    rows.sort(key=lambda r: (r["score"], r["key"]))
    result = SweepResult(best=by_key[rows[0]["key"]], leaderboard=rows)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "leaderboard.json").write_text(json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n")
    return result
