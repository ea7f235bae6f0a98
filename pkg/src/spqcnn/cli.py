"""Command-line entry point.

Every run that writes files starts with ``manifest.json`` in the output
directory; CSV outputs carry a ``# manifest: manifest.json`` header line and
JSON outputs a ``manifest`` key. Timestamps come from ``SOURCE_DATE_EPOCH``
(default 0) so repeated runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import __version__
from .groups import all_subgroups, subgroups_json
from .presets import group_preset
from .rng import make_rng
from .splitting import SplitPlan, auto_split, seed_alternatives, validate_plan

MANIFEST = "manifest.json"
EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    subcommand: str
    config: str | None
    seeds: list[int]
    out: str | None
    version: str = __version__
    timestamp: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.timestamp:
            epoch = int(os.environ.get("SOURCE_DATE_EPOCH", "0"))
            self.timestamp = datetime.fromtimestamp(epoch, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    # strict JSON: NaN and infinities become null
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if not math.isfinite(x) else repr(x)
    return str(x)


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest: {MANIFEST}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


class Output:
    """Writes into ``--out`` (after the manifest) or to stdout."""

    def __init__(self, out: str | None, manifest: RunManifest, as_file: bool = False):
        self.file = None
        self.dir = None
        if out is not None and as_file:
            self.file = Path(out)
            self.file.parent.mkdir(parents=True, exist_ok=True)
            self.file.with_name(MANIFEST).write_text(_dumps(asdict(manifest)))
        elif out is not None:
            self.dir = Path(out)
            self.dir.mkdir(parents=True, exist_ok=True)
            (self.dir / MANIFEST).write_text(_dumps(asdict(manifest)))

    def emit(self, name: str, text: str) -> None:
        if self.file is not None:
            self.file.write_text(text)
        elif self.dir is not None:
            (self.dir / name).write_text(text)
        else:
            sys.stdout.write(text)


def _parse_seeds(args) -> list[int]:
    if args.seeds:
        a, sep, b = args.seeds.partition("..")
        try:
            lo, hi = int(a), int(b if sep else a)
        except ValueError:
            raise UsageError(f"--seeds expects a..b, got {args.seeds!r}") from None
        if hi < lo or lo < 0:
            raise UsageError(f"bad seed range {args.seeds!r}")
        return list(range(lo, hi + 1))
    return [args.seed]


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with Pool(min(jobs, len(items))) as pool:
            return pool.map(fn, items)
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# subcommands


def cmd_group(args) -> int:
    G = group_preset(args.group)
    subs = all_subgroups(G)
    manifest = RunManifest("group", None, [], args.out, options={"group": args.group})
    out = Output(args.out, manifest, as_file=True)
    out.emit("group.json", _dumps({
        "manifest": MANIFEST,
        "preset": args.group,
        "group": G.to_json(),
        "order": G.order,
        "elements": [list(g.images) for g in G.elements],
        "subgroups": subgroups_json(subs),
    }))
    return EXIT_OK


def cmd_split(args) -> int:
    G = group_preset(args.group)
    plan = auto_split(G, args.layers)
    manifest = RunManifest("split", None, [], args.out, options={"group": args.group, "layers": args.layers})
    out = Output(args.out, manifest, as_file=True)
    data = plan.to_json()
    data["manifest"] = MANIFEST
    # other valid finest-layer seeds; the plan uses the first that auto_split accepts
    data["seed_alternatives"] = [
        {"subgroup_elements": [list(h.images) for h in H.elements], "subset": sorted(P)}
        for spec in seed_alternatives(G) for H, P in spec.entries
    ]
    out.emit("plan.json", _dumps(data))
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        data = json.loads(Path(args.plan).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read plan {args.plan}: {exc}") from None
    plan = SplitPlan.from_json(data)
    report = validate_plan(plan)
    manifest = RunManifest("verify", args.plan, [], args.out)
    out = Output(args.out, manifest, as_file=True)
    body = report.to_json()
    body["manifest"] = MANIFEST
    out.emit("report.json", _dumps(body))
    for c in report.failures():
        first = c.violations[0] if c.violations else {}
        print(f"FAIL {c.requirement} (layer {c.layer}): {json.dumps(first)}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_INVALID


def _train_one(config_dict):
    from .training import TrainConfig, train

    rec = train(TrainConfig.from_json(config_dict))
    rows = [(m.epoch, m.iterations, m.train_loss, m.test_loss, m.test_accuracy, m.shots_spent, m.efficiency_r)
            for m in rec.epochs]
    return rows, asdict(rec.final()), [float(x) for x in rec.theta]


def cmd_train(args) -> int:
    from .training import TrainConfig

    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    for key, val in (("model", args.model), ("backend", args.backend), ("n_shot", args.shots),
                     ("n_epoch", args.epochs)):
        if val is not None:
            base[key] = val
    seeds = _parse_seeds(args)
    try:
        configs = [TrainConfig.from_json({**base, "seed": s}).to_json() for s in seeds]
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    manifest = RunManifest("train", args.config, seeds, args.out, options={k: v for k, v in base.items()})
    out = Output(args.out, manifest)
    results = _map(_train_one, configs, args.jobs)
    header = ["epoch", "iterations", "train_loss", "test_loss", "test_acc", "shots_spent", "r"]
    summary = []
    for seed, cfg, (rows, final, theta) in zip(seeds, configs, results):
        out.emit(f"train_seed{seed}.csv", _csv_text(header, rows))
        summary.append({"seed": seed, "config": cfg, "final": final, "theta": theta})
    out.emit("summary.json", _dumps({"manifest": MANIFEST, "runs": summary}))
    return EXIT_OK


def _bench_one(job):
    from .heisenberg import dataset_arrays, make_dataset
    from .shots import EfficiencyReport, batch_estimates
    from .training import build_model, init_parameters

    seed, n_t, gamma, shots, batches = job
    model = build_model("eq-sp")
    theta = init_parameters(model.circuit, seed)
    states = model.output_states(theta, dataset_arrays(make_dataset(n_t, gamma, seed))[0])
    rng = make_rng(seed, "efficiency", 0)
    per_state = []
    first = None
    for s in states:
        sp, rd = batch_estimates(s, model.obs, shots, batches, rng)
        first = (sp, rd) if first is None else first
        per_state.append((float(sp.var(ddof=1)), float(rd.var(ddof=1))))
    v_sp = float(np.mean([a for a, _ in per_state]))
    v_rand = float(np.mean([b for _, b in per_state]))
    rep = EfficiencyReport(v_sp, v_rand, v_rand / v_sp if v_sp > 0 else float("inf"), batches, shots, per_state)
    return seed, rep, first


def cmd_bench(args) -> int:
    seeds = _parse_seeds(args)
    shots = args.shots or 100
    manifest = RunManifest("bench", None, seeds, args.out,
                           options={"shots": shots, "batches": args.batches, "n_t": args.n_t, "gamma": args.gamma})
    out = Output(args.out, manifest)
    results = _map(_bench_one, [(s, args.n_t, args.gamma, shots, args.batches) for s in seeds], args.jobs)
    rows = []
    for seed, _, (sp, rd) in results:
        rows.extend((seed, b, "sp", float(x)) for b, x in enumerate(sp))
        rows.extend((seed, b, "rand", float(x)) for b, x in enumerate(rd))
    # batch estimates are listed for the first input state of each seed
    out.emit("batches.csv", _csv_text(["seed", "batch_index", "estimator", "estimate"], rows))
    runs = [{"seed": seed, "v_sp": rep.v_sp, "v_rand": rep.v_rand, "r": rep.r} for seed, rep, _ in results]
    out.emit("summary.json", _dumps({
        "manifest": MANIFEST, "runs": runs, "shots_per_batch": shots, "batches": args.batches,
        "mean_r": float(np.mean([r["r"] for r in runs])),
    }))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradient import finite_difference, gradient_exact, gradient_packed_exact, shift_gradient_exact
    from .statevector import random_state
    from .training import build_model, init_parameters

    model = build_model(args.model if args.model != "eq-rand" else "eq-sp")
    seeds = _parse_seeds(args)
    rows = []
    worst_rel = worst_pack = 0.0
    for seed in seeds:
        rng = make_rng(seed, "gradcheck")
        theta = init_parameters(model.circuit, seed)
        psi = random_state(model.circuit.n, rng)
        slot = int(rng.integers(model.circuit.n_slots))
        shift = shift_gradient_exact(model.circuit, theta, psi, model.obs, slot)
        fd = finite_difference(model.circuit, theta, psi, model.obs, slot, h=1e-5)
        rel = abs(shift - fd) / max(abs(shift), abs(fd), 1e-8)
        full = gradient_exact(model.circuit, theta, psi, model.obs, model.program)
        packed = gradient_packed_exact(model.circuit, theta, psi, model.obs, model.groups, model.program)
        pack_err = float(np.max(np.abs(full - packed)))
        worst_rel, worst_pack = max(worst_rel, rel), max(worst_pack, pack_err)
        rows.append((seed, slot, shift, fd, abs(shift - fd), rel, pack_err))
    manifest = RunManifest("gradcheck", None, seeds, args.out, options={"model": model.name})
    out = Output(args.out, manifest)
    out.emit("gradcheck.csv", _csv_text(["seed", "slot", "shift", "finite_diff", "abs_err", "rel_err", "packed_err"], rows))
    ok = worst_rel <= 1e-4 and worst_pack <= 1e-12
    print(f"max rel err {worst_rel:.2e}, max packed err {worst_pack:.2e}: {'ok' if ok else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_INVALID


def cmd_bp_scan(args) -> int:
    from .diagnostics import bp_diagnostics

    rep = bp_diagnostics(args.n, args.samples, args.seed, args.layers, args.depth)
    manifest = RunManifest("bp-scan", None, [args.seed], args.out,
                           options={"n": args.n, "samples": args.samples, "layers": args.layers, "depth": args.depth})
    out = Output(args.out, manifest)
    rows = [(r.n, r.samples, r.var_c, r.var_c_err, r.mean_var_cj, r.worst_mean_z, r.worst_cross_z) for r in rep.rows]
    out.emit("bp_scan.csv", _csv_text(
        ["n", "samples", "var_c", "var_c_err", "mean_var_cj", "max_z_mean", "max_z_cross"], rows))
    out.emit("bp_summary.json", _dumps({"manifest": MANIFEST, "exponent": rep.exponent,
                                        "means_within_bound": rep.means_ok, "z_bound": rep.z_bound}))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spqcnn", description="Split-parallel equivariant QCNN toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seeds=True):
        sp.add_argument("--out", help="output directory (or file for single-file commands)")
        if seeds:
            sp.add_argument("--seed", type=int, default=0)
            sp.add_argument("--seeds", help="inclusive range a..b, overrides --seed")
            sp.add_argument("--jobs", type=int, default=1)

    g = sub.add_parser("group", help="group elements and subgroup lattice of a preset")
    g.add_argument("--group", required=True)
    common(g, seeds=False)
    g.set_defaults(func=cmd_group)

    s = sub.add_parser("split", help="build a split plan with auto_split")
    s.add_argument("--group", required=True)
    s.add_argument("--layers", type=int, default=3)
    common(s, seeds=False)
    s.set_defaults(func=cmd_split)

    v = sub.add_parser("verify", help="validate a split plan JSON")
    v.add_argument("plan")
    common(v, seeds=False)
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("train", help="train the cube classifier")
    t.add_argument("--config")
    t.add_argument("--model", choices=["eq-sp", "noneq-sp", "eq-rand"])
    t.add_argument("--backend", choices=["exact", "shots"])
    t.add_argument("--shots", type=int, help="shots per circuit (N_shot)")
    t.add_argument("--epochs", type=int)
    common(t)
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("bench", help="efficiency ratio at random initialization")
    b.add_argument("--shots", type=int, help="shots per batch (default 100)")
    b.add_argument("--batches", type=int, default=10000)
    b.add_argument("--n-t", type=int, default=10)
    b.add_argument("--gamma", type=float, default=0.4)
    common(b)
    b.set_defaults(func=cmd_bench)

    gc = sub.add_parser("gradcheck", help="parameter-shift vs finite differences and packed vs slot-wise")
    gc.add_argument("--model", choices=["eq-sp", "noneq-sp", "eq-rand"], default="eq-sp")
    common(gc)
    gc.set_defaults(func=cmd_gradcheck)

    bp = sub.add_parser("bp-scan", help="barren-plateau variance scan on ring circuits")
    bp.add_argument("--n", type=int, nargs="+", default=[4, 8])
    bp.add_argument("--samples", type=int, default=10000)
    bp.add_argument("--layers", type=int, default=3)
    bp.add_argument("--depth", type=int, default=2)
    common(bp)
    bp.set_defaults(func=cmd_bp_scan)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
