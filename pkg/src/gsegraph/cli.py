"""Command-line entry point: ``gsegraph <subcommand> [options]``.

Every run writes a directory with the resolved ``config.json``, the data file
of the subcommand and ``report.json``. Exit status is 0 on success, 2 when a
checked threshold fails and 1 on any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ensemble import (
    DEFAULT_BAND,
    DEFAULT_NK,
    DEFAULT_REALIZATIONS,
    KS_THRESHOLD,
    GraphEnsembleConfig,
    compare_report,
    dump_json,
    ks_distance,
    mean_reflection_power,
    read_samples_csv,
    run_graph_ensemble,
    run_rmt_ensemble,
    stat_name,
    variance_ratio,
)
from .graph import default_gse_graph, four_coupling_variant, load_graph_config
from .rmt import RmtModel, estimate_transmission
from .scattering import phase_sweep, pi_phase_bond, sweep_minima, write_phase_sweep
from .spectrum import (
    first_eigenwavenumbers,
    find_eigenwavenumbers,
    kramers_fold,
    pair_roots,
    read_spectrum_csv,
    spectrum_csv,
)
from .statistics import analyze, unfold_record

log = logging.getLogger("gsegraph")

EXIT_OK, EXIT_ERROR, EXIT_THRESHOLD = 0, 1, 2


class ThresholdFailure(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _topology(args):
    g = load_graph_config(args.config) if args.config else default_gse_graph()
    if getattr(args, "variant", "two") == "four":
        g = four_coupling_variant(g)
    return g


def _write_config(out: Path, args, extra=None):
    # execution-only options stay out so outputs do not depend on them
    skip = {"func", "workers", "out", "verbose"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg.update(extra or {})
    cfg["version"] = __version__
    dump_json(cfg, out / "config.json")


def cmd_spectrum(args):
    g = _topology(args)
    if args.k_max is not None:
        rec = find_eigenwavenumbers(g, args.k_min, args.k_max, workers=args.workers)
    else:
        rec = first_eigenwavenumbers(g, args.count, args.k_min, workers=args.workers)
    means, unpaired = pair_roots(rec.eigenwavenumbers)
    if args.fold:
        rec = kramers_fold(rec)
    out = _out_dir(args)
    (out / "spectrum.csv").write_text(spectrum_csv(rec, args.seed))
    _write_config(out, args, {"topology_digest": rec.topology_digest})
    dump_json({"n_roots": len(rec), "n_doublets": len(means), "n_unpaired": len(unpaired),
               "total_length": rec.total_length, "fold_policy": rec.fold_policy}, out / "report.json")
    log.info("%d roots written to %s", len(rec), out)


def _samples_report(samples) -> dict:
    off = samples.entry("1", "2")
    diag = samples.entry("1", "1")
    return {
        "source": samples.source,
        "n_samples": len(samples),
        "variance_ratio_re_S12bar_over_S12": variance_ratio(samples),
        "ks_re_S12_vs_re_S12bar": ks_distance(off.real, samples.entry("1", "2bar").real),
        "ks_re_vs_im_S12": ks_distance(off.real, off.imag),
        "ks_re_vs_im_S11": ks_distance(diag.real, diag.imag),
        "mean_abs2_S11": mean_reflection_power(samples),
        "transmission_T1": estimate_transmission(diag, min_samples=1),
        "max_abs_S11bar": float(np.abs(samples.entry("1", "1bar")).max()),
    }


def _write_samples(out: Path, samples):
    with open(out / "samples.csv", "w", newline="") as fh:
        samples.write_csv(fh)


def cmd_scatter(args):
    cfg = GraphEnsembleConfig(band=tuple(args.band), n_k=args.n_k, realizations=args.realizations,
                              eps=args.eps, variant=args.variant, seed=args.seed)
    base = load_graph_config(args.config) if args.config else None
    samples = run_graph_ensemble(cfg, base, workers=args.workers)
    out = _out_dir(args)
    _write_config(out, args, {"ensemble": cfg.to_dict(), "topology_digest": samples.meta["topology_digest"]})
    _write_samples(out, samples)
    dump_json(_samples_report(samples), out / "report.json")


def _rmt_model(args) -> RmtModel:
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.tau_abs is not None:
        d["tau_abs"] = args.tau_abs
    if args.v_structure is not None:
        d["v_structure"] = args.v_structure
    if args.realizations is not None:
        d["ensemble_size"] = args.realizations
    if args.n is not None:
        d["N"] = args.n
    d["seed"] = args.seed
    return RmtModel.from_dict(d)


def cmd_rmt(args):
    model = _rmt_model(args)
    samples = run_rmt_ensemble(model, workers=args.workers)
    out = _out_dir(args)
    _write_config(out, args, {"model": model.to_dict()})
    _write_samples(out, samples)
    dump_json(_samples_report(samples), out / "report.json")


def cmd_stats(args):
    if args.spectrum:
        rec = read_spectrum_csv(Path(args.spectrum).read_text())
    else:
        rec = first_eigenwavenumbers(_topology(args), args.count, workers=args.workers)
    if not rec.folded and args.fold:
        rec = kramers_fold(rec)
    unfolded = unfold_record(rec, discard=args.discard)
    L = np.linspace(args.l_min, args.l_max, args.n_l)
    report = analyze(unfolded, L, n_windows=args.windows, seed=args.seed,
                     meta={"topology_digest": rec.topology_digest, "fold_policy": rec.fold_policy})
    out = _out_dir(args)
    _write_config(out, args)
    (out / "report.json").write_text(report.to_json() + "\n")
    report.write_csv(str(out / "stats"))


def cmd_sweep(args):
    g = _topology(args)
    kc = sum(args.band) / 2
    increments = np.arange(args.increments) * (2 * np.pi / kc) / args.increments
    ks = np.linspace(*args.band, args.n_k)
    amp = phase_sweep(g, increments, ks, eps=args.eps, workers=args.workers)
    out = _out_dir(args)
    _write_config(out, args)
    write_phase_sweep(out / "sweep.csv", out / "sweep.json", amp, increments, ks,
                      {"bond": pi_phase_bond(g), "seed": args.seed})
    # a minimum along the increment axis at zero extra phase
    mid = amp[:, len(ks) // 2]
    minima = sweep_minima(np.concatenate([mid[-1:], mid, mid[:1]])) - 1
    report = {"max_abs_S11bar_at_zero_increment": float(amp[0].max()),
              "minima_increment_index_at_band_centre": [int(m) for m in minima]}
    dump_json(report, out / "report.json")


def _parse_expect(items) -> dict:
    expect = {}
    for item in items or []:
        name, _, want = item.partition("=")
        if want not in ("match", "deviate"):
            raise ValueError(f"--expect takes NAME=match|deviate, got {item!r}")
        expect[name] = want
    return expect


def cmd_compare(args):
    with open(Path(args.first) / "samples.csv", newline="") as fh:
        a = read_samples_csv(fh)
    with open(Path(args.second) / "samples.csv", newline="") as fh:
        b = read_samples_csv(fh)
    report = compare_report(a, b, expect=_parse_expect(args.expect), threshold=args.threshold)
    out = _out_dir(args)
    _write_config(out, args)
    dump_json(report, out / "report.json")
    for name, row in report["statistics"].items():
        print(f"{name:>12s}  KS={row['ks']:.4f}  expect={row['expect']:<7s}  {'ok' if row['pass'] else 'FAIL'}")
    if report["status"] != "pass":
        raise ThresholdFailure("distribution comparison failed")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="graph or RMT model JSON")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="run", help="output directory")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="gsegraph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", parents=[common], help="closed-graph eigenwavenumbers")
    s.add_argument("--count", type=int, default=1000)
    s.add_argument("--k-min", type=float, default=1e-3)
    s.add_argument("--k-max", type=float)
    s.add_argument("--fold", action="store_true", help="keep one root per Kramers doublet")
    s.add_argument("--variant", choices=("two", "four"), default="two")
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("scatter", parents=[common], help="graph S-matrix ensemble")
    s.add_argument("--eps", type=float, default=0.0175)
    s.add_argument("--band", type=float, nargs=2, default=list(DEFAULT_BAND))
    s.add_argument("--n-k", type=int, default=DEFAULT_NK)
    s.add_argument("--realizations", type=int, default=DEFAULT_REALIZATIONS)
    s.add_argument("--variant", choices=("two", "four"), default="two")
    s.set_defaults(func=cmd_scatter)

    s = sub.add_parser("rmt", parents=[common], help="random-matrix S-matrix ensemble")
    s.add_argument("--tau-abs", type=float)
    s.add_argument("--v-structure", choices=("full", "sparse"))
    s.add_argument("--realizations", type=int)
    s.add_argument("--n", type=int, help="block dimension N")
    s.set_defaults(func=cmd_rmt)

    s = sub.add_parser("stats", parents=[common], help="spectral statistics")
    s.add_argument("--spectrum", help="spectrum.csv from a spectrum run")
    s.add_argument("--count", type=int, default=4100)
    s.add_argument("--fold", action=argparse.BooleanOptionalAction, default=True)
    s.add_argument("--discard", type=int, default=50)
    s.add_argument("--windows", type=int, default=1000)
    s.add_argument("--l-min", type=float, default=0.5)
    s.add_argument("--l-max", type=float, default=20.0)
    s.add_argument("--n-l", type=int, default=40)
    s.add_argument("--variant", choices=("two", "four"), default="two")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("sweep", parents=[common], help="|S_1 1bar| over frequency and length increment")
    s.add_argument("--eps", type=float, default=0.0)
    s.add_argument("--band", type=float, nargs=2, default=[100.0, 110.0])
    s.add_argument("--n-k", type=int, default=400)
    s.add_argument("--increments", type=int, default=30)
    s.add_argument("--variant", choices=("two", "four"), default="two")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", parents=[common], help="compare two sample runs")
    s.add_argument("first", help="run directory holding samples.csv")
    s.add_argument("second", help="run directory holding samples.csv")
    s.add_argument("--threshold", type=float, default=KS_THRESHOLD)
    s.add_argument("--expect", action="append", metavar="NAME=match|deviate",
                   help=f"e.g. {stat_name('1', '2bar', 'im')}=deviate")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ThresholdFailure as exc:
        print(f"threshold failure: {exc}", file=sys.stderr)
        return EXIT_THRESHOLD
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
