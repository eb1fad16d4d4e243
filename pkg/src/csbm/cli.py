"""Command-line entry point: csbm {generate,fit,select-k,report} CONFIG [overrides].

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import __version__, netdata, report, synthgen
from .config import RunConfig
from .errors import ConfigError, DomainError, NumericalError
from .sampler import SamplerConfig, run, select_k

log = logging.getLogger("csbm")


def _load_data(cfg: RunConfig):
    """Returns (data, truth or None, source description)."""
    raw = cfg.raw
    if raw.get("generate") is not None:
        spec = synthgen.genspec_from_dict(raw["generate"])
        data, truth = synthgen.generate(spec)
        return data, truth, {"generated": spec.to_dict()}
    d = raw.get("data")
    if not d:
        raise ConfigError("config needs a data block or a generate block")
    for key in ("paths", "kind", "modality"):
        if key not in d:
            raise ConfigError(f"data.{key} is required")
    paths = d["paths"] if isinstance(d["paths"], list) else [d["paths"]]
    paths = [cfg.resolve(p) for p in paths]
    for p in paths:
        if not p.exists():
            raise ConfigError(f"input file not found: {p}")
    names = netdata.load_label_map(cfg.resolve(d["labels"])) if d.get("labels") else None
    data = netdata.load_multiplex(paths, d["kind"], d["modality"], d.get("n"), names)
    truth = netdata.read_labels(cfg.resolve(d["truth"])) if d.get("truth") else None
    if truth is not None and len(truth) != data.n:
        raise ConfigError("truth labels do not match the number of nodes")
    return data, truth, {"paths": [str(p) for p in paths]}


def _sampler_config(cfg: RunConfig, data, K=None):
    kw = cfg.sampler_kwargs()
    if K is not None:
        kw["K"] = K
    spec = cfg.family_spec(data.modality)
    prior = cfg.prior(kw["K"])
    if isinstance(kw.get("init"), str) and kw["init"] not in ("random", "singleton"):
        kw["init"] = netdata.read_labels(cfg.resolve(kw["init"]))
    return SamplerConfig(family=spec, prior=prior, **kw)


def _data_summary(data):
    return {"n": data.n, "kind": data.kind, "modality": data.modality,
            "layers": data.n_layers, "stored_dyads": [len(k) for k, _ in data.layers],
            "total_mass": data.total_mass()}


def cmd_generate(cfg: RunConfig, out):
    if cfg.raw.get("generate") is None:
        raise ConfigError("generate needs a generate block")
    data, truth, source = _load_data(cfg)
    files = []
    for l in range(data.n_layers):
        name = "edges.txt" if data.n_layers == 1 else f"layer{l}.txt"
        netdata.write_edge_list(data, out / name, l)
        files.append(name)
    netdata.write_labels(truth, out / "truth.tsv")
    files.append("truth.tsv")
    return {"data": _data_summary(data), "source": source, "files": files}


def _write_fit(out, data, res, truth, cfg, scfg):
    files = ["labels_map.tsv", "blocks.csv", "psm.csv", "psm_order.txt", "trace.csv"]
    netdata.write_labels(res.z_map, out / "labels_map.tsv")
    report.write_block_summary_csv(res.block_summary, out / "blocks.csv")
    order = report.psm_ordering(res.z_map, res.psm)
    report.write_matrix_csv(res.psm, out / "psm.csv")
    report.write_matrix_csv(res.psm[np.ix_(order, order)], out / "psm_ordered.csv")
    files.append("psm_ordered.csv")
    report.write_ordering(order, out / "psm_order.txt")
    report.write_trace_csv(res.traces, out / "trace.csv")
    results = {"map_log_posterior": res.map_log_posterior, "map_chain": res.map_chain,
               "map_sweep": res.map_sweep, "n_retained": res.n_retained,
               "cluster_sizes": res.cluster_sizes, "K_map": int((res.cluster_sizes > 0).sum()),
               "chains": [{"chain": c, "map_log_posterior": v, "map_sweep": s}
                          for c, v, s in res.chain_maps]}
    if truth is not None:
        results["ari"] = res.ari
        report.write_matrix_csv(report.confusion(truth, res.z_map), out / "confusion.csv",
                                integer=True)
        files.append("confusion.csv")
    files += _degree_corrected(cfg, data, res.z_map, out)
    return results, files


def _degree_corrected(cfg, data, z, out):
    rep = cfg.raw["report"]
    if not rep.get("propensities"):
        return []
    theta = netdata.estimate_propensities(data)
    omega = report.degree_corrected_summary(data, z, theta, rep.get("a", 1.0), rep.get("b", 1.0))
    report.write_matrix_csv(omega, out / "degree_corrected.csv")
    return ["degree_corrected.csv"]


def cmd_fit(cfg: RunConfig, out):
    data, truth, source = _load_data(cfg)
    scfg = _sampler_config(cfg, data)
    res = run(scfg, data, truth)
    results, files = _write_fit(out, data, res, truth, cfg, scfg)
    return {"data": _data_summary(data), "source": source, "results": results, "files": files,
            "model_effective": scfg.family.to_dict(), "prior_effective": scfg.prior.to_dict()}


def cmd_select_k(cfg: RunConfig, out):
    data, _, source = _load_data(cfg)
    ks = cfg.raw["select_k"].get("K_values")
    if not ks:
        raise ConfigError("select-k needs select_k.K_values (or --k 2,3,4)")
    scfg = _sampler_config(cfg, data, K=int(ks[0]))
    rows = select_k(data, ks, scfg)
    with (out / "select_k.csv").open("w") as fh:
        fh.write("K,best_log_posterior\n")
        for K, v in rows:
            fh.write(f"{K},{float(v)!r}\n")
    best = max(rows, key=lambda r: (r[1], -r[0]))
    return {"data": _data_summary(data), "source": source, "files": ["select_k.csv"],
            "results": {"table": [{"K": K, "best_log_posterior": v} for K, v in rows],
                        "best_K": best[0]},
            "model_effective": scfg.family.to_dict()}


def cmd_report(cfg: RunConfig, out):
    data, truth, source = _load_data(cfg)
    rep = cfg.raw["report"]
    if not rep.get("labels"):
        raise ConfigError("report needs report.labels (a label file to summarize at)")
    z = netdata.read_labels(cfg.resolve(rep["labels"]))
    if len(z) != data.n:
        raise ConfigError("label file does not match the number of nodes")
    spec = cfg.family_spec(data.modality)
    table = report.block_summary(data, z, spec, level=cfg.raw["sampler"]["level"])
    report.write_block_summary_csv(table, out / "blocks.csv")
    files = ["blocks.csv"]
    results = {"cluster_sizes": np.bincount(z)}
    if truth is not None:
        results["ari"] = report.ari(truth, z)
        report.write_matrix_csv(report.confusion(truth, z), out / "confusion.csv", integer=True)
        files.append("confusion.csv")
    files += _degree_corrected(cfg, data, z, out)
    return {"data": _data_summary(data), "source": source, "results": results, "files": files,
            "model_effective": spec.to_dict()}


COMMANDS = {"generate": cmd_generate, "fit": cmd_fit, "select-k": cmd_select_k,
            "report": cmd_report}


def build_parser():
    p = argparse.ArgumentParser(prog="csbm", description="Collapsed Bayesian SBM runs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="YAML run configuration")
    p.add_argument("--seed", type=int, help="override sampler (and generator) seed")
    p.add_argument("--sweeps", type=int, help="override sampler sweeps")
    p.add_argument("--k", help="override K (fit) or the K grid, e.g. 2,3,4 (select-k)")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config)
        cfg.apply_overrides(args.seed, args.sweeps, args.k, args.out)
        out = cfg.output_dir
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        log.info("running %s -> %s", args.command, out)
        payload = COMMANDS[args.command](cfg, out)
        manifest = {"command": args.command, "version": __version__,
                    "config": cfg.effective(), **payload}
        manifest["files"] = sorted(payload.get("files", [])) + ["manifest.json"]
        report.write_manifest(manifest, out / "manifest.json")
    except NumericalError as exc:
        print(f"csbm: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError, OSError) as exc:
        print(f"csbm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
