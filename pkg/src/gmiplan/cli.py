"""Command-line front end.

Commands: validate, plan, reduce, pipeline, search.  Exit codes: 0 ok,
1 layout violation or infeasible request, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channels, mapping, reduction, search, topology
from .config import ConfigError, RunConfig, load_config
from .mapping import Mode, PlanError, TemplateKind

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive(conv):
    def parse(s):
        v = conv(s)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v
    return parse


def _non_negative(s):
    v = float(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {s}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--topology", metavar="FILE", help="run configuration file (sections topology/workload/model/search)")
    common.add_argument("--workload", metavar="NAME|FILE", help="benchmark name (AT, AY, BB, FC, HM, SH) or workload file")
    common.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.SYNC_TRAIN.value)
    common.add_argument("--b1", type=_positive(float), help="inter-GMI host-bounce bandwidth")
    common.add_argument("--b2", type=_positive(float), help="inter-GPU ring bandwidth")
    common.add_argument("--format", choices=["text", "json", "structured"], default="text")

    parser = argparse.ArgumentParser(prog="gmiplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check the GMI layout")
    p = sub.add_parser("plan", parents=[common], help="compare mapping templates and build a plan")
    p.add_argument("--serving-comm-factor", type=_positive(float))
    p.add_argument("--training-comm-factor", type=_positive(float))

    r = sub.add_parser("reduce", parents=[common], help="select and simulate gradient reduction")
    r.add_argument("--layout", help='GMI-to-GPU mapping list, e.g. "[[0,1],[2,3]]" (default: topology)')
    r.add_argument("--payload-size", type=_positive(int), help="gradient bytes (default: workload model size)")
    r.add_argument("--force-strategy", type=str.upper, choices=[s.value for s in reduction.Strategy])
    r.add_argument("--trace-out", metavar="FILE", help="write the event trace as JSON lines")

    pl = sub.add_parser("pipeline", parents=[common], help="simulate multi- vs uni-channel experience sharing")
    pl.add_argument("--duration", type=float, default=1000.0)
    pl.add_argument("--overhead", type=_non_negative, help="per-message overhead")
    pl.add_argument("--threshold", type=_positive(int), help="records per transfer unit")

    s = sub.add_parser("search", parents=[common], help="profiling-based configuration search")
    s.add_argument("--sat-threshold", type=float)
    s.add_argument("--trace", metavar="FILE", help="recorded profile CSV (default: synthetic model)")
    return parser


def _load(args) -> RunConfig:
    cfg = load_config(args.topology, args.workload)
    if args.b1 is not None or args.b2 is not None:
        topo = cfg.topology.with_bandwidths(args.b1, args.b2)
        cfg = replace(cfg, topology=topo, search=replace(cfg.search, b1=topo.b1, b2=topo.b2))
    return cfg


def cmd_validate(cfg: RunConfig, args) -> tuple[int, dict]:
    rep = topology.validate_layout(cfg.topology)
    report = {
        "command": "validate",
        "ok": rep.ok,
        "gpus": len(cfg.topology.gpus),
        "partitions": [
            {"gmi": p.gmi_id, "gpu": p.gpu_id, "backend": p.backend.value, "sm_share": str(p.sm_share),
             "mem_gb": p.mem_gb} for p in cfg.topology.partitions],
        "violations": [{"gpu": v.gpu_id, "rule": v.rule, "message": v.message} for v in rep.violations],
    }
    return (EXIT_OK if rep.ok else EXIT_DOMAIN), report


def _cost_dict(c: mapping.CostEstimate) -> dict:
    return {"template": c.template.value, "resource_size": c.resource_size, "comm_size": c.comm_size,
            "throughput": c.throughput}


def cmd_plan(cfg: RunConfig, args) -> tuple[int, dict]:
    params = cfg.model
    if args.serving_comm_factor or args.training_comm_factor:
        params = replace(params, serving_comm_factor=args.serving_comm_factor or params.serving_comm_factor,
                         training_comm_factor=args.training_comm_factor or params.training_comm_factor)
    mode = Mode(args.mode)
    wl = cfg.workload
    total = params.units_per_gpu * len(cfg.topology.gpus)
    n_gmis = len(cfg.topology.gpus) * cfg.gmis_per_gpu
    template = mapping.select_template(mode)
    report = {"command": "plan", "mode": mode.value, "workload": wl.name, "total_resource": total,
              "selected": template.value}

    if mode is Mode.SERVING or mode is Mode.ASYNC_TRAIN:
        cmp_ = mapping.compare_serving(wl, total, params)
        report["serving"] = _comparison_dict(cmp_)
    if mode is Mode.SYNC_TRAIN or mode is Mode.ASYNC_TRAIN:
        cmp_ = mapping.compare_training(wl, total, n_gmis, params)
        report["training"] = _comparison_dict(cmp_) | {"n_gmis": n_gmis}
    try:
        plan = mapping.build_plan(template, cfg.topology, wl, cfg.gmis_per_gpu)
    except PlanError as e:
        report["feasible"] = False
        report["error"] = str(e)
        return EXIT_DOMAIN, report
    report["feasible"] = True
    report["plan"] = plan.to_dict()
    return EXIT_OK, report


def _comparison_dict(c: mapping.TemplateComparison) -> dict:
    return {"dedicated": _cost_dict(c.dedicated), "colocated": _cost_dict(c.colocated),
            "bandwidth": c.bandwidth, "ratio": c.ratio, "resource_penalty": c.resource_penalty}


def cmd_reduce(cfg: RunConfig, args) -> tuple[int, dict]:
    if args.layout:
        try:
            layout = reduction.GmiLayout(json.loads(args.layout))
        except (ValueError, TypeError) as e:
            raise UsageError(f"--layout: {e}") from None
    else:
        layout = reduction.GmiLayout.of(cfg.topology)
    payload = args.payload_size or int(cfg.workload.model_size)
    if payload % cfg.element_size:
        raise UsageError(f"--payload-size {payload} is not a multiple of the element size {cfg.element_size}")
    b1, b2 = cfg.topology.b1, cfg.topology.b2
    g, t = layout.num_gpus, layout.max_per_gpu
    selected = reduction.select_strategy(layout)
    predicted = {}
    for s in reduction.Strategy:
        predicted[s.value] = (reduction.layout_latency(s, layout, payload, b1, b2)
                              if reduction.is_applicable(s, layout) else None)
    report = {"command": "reduce", "layout": [list(x) for x in layout.mpl], "gpus": g, "gmis_per_gpu_max": t,
              "payload_bytes": payload, "b1": b1, "b2": b2, "selected": selected.value, "predicted": predicted,
              "leaders": reduction.leader_gmis(layout)}
    strategy = reduction.Strategy(args.force_strategy) if args.force_strategy else selected
    report["executed"] = strategy.value
    rng = np.random.default_rng(cfg.pipeline.seed)
    n = payload // cfg.element_size
    buffers = {gmi: rng.standard_normal(n) for gmi in layout.gmis}
    try:
        run = reduction.execute(strategy, layout, buffers, b1=b1, b2=b2, element_size=cfg.element_size)
    except reduction.StrategyNotApplicable as e:
        report["error"] = str(e)
        return EXIT_DOMAIN, report
    expected = reduction.layout_latency(strategy, layout, payload, b1, b2)
    report["latency"] = run.latency
    report["latency_matches_prediction"] = abs(run.latency - expected) <= 1e-12 * max(1.0, abs(expected))
    phases: dict[str, int] = {}
    links: dict[str, float] = {}
    for e in run.trace:
        phases[e.phase] = phases.get(e.phase, 0) + 1
        links[e.link.value] = links.get(e.link.value, 0.0) + e.bytes
    report["trace"] = {"events": len(run.trace), "steps": len({e.step for e in run.trace if e.phase != "broadcast"}),
                       "events_per_phase": phases, "bytes_per_link": links}
    if args.trace_out:
        Path(args.trace_out).write_text("\n".join(run.trace_lines()) + "\n")
    if not report["latency_matches_prediction"]:
        report["error"] = f"trace latency {run.latency} differs from predicted {expected}"
        return EXIT_DOMAIN, report
    return EXIT_OK, report


def cmd_pipeline(cfg: RunConfig, args) -> tuple[int, dict]:
    if not args.duration > 0:
        raise UsageError(f"--duration must be positive, got {args.duration}")
    pc = cfg.pipeline
    if args.overhead is not None:
        pc = replace(pc, overhead=args.overhead)
    if args.threshold is not None:
        pc = replace(pc, compress_threshold=args.threshold)
    report = {"command": "pipeline", "workload": cfg.workload.name, "duration": args.duration,
              "config": {"compress_threshold": pc.compress_threshold, "batch_mode": pc.batch_mode.value,
                         "target_batch": pc.target_batch, "overhead": pc.overhead, "seed": pc.seed}}
    try:
        plan = mapping.build_plan(TemplateKind.ASYNC_DECOUPLED, cfg.topology, cfg.workload, cfg.gmis_per_gpu)
    except PlanError as e:
        report["feasible"] = False
        report["error"] = str(e)
        return EXIT_DOMAIN, report
    mcc = channels.simulate_pipeline(cfg.workload, plan, pc, args.duration)
    ucc = channels.simulate_pipeline(cfg.workload, plan, pc.uni_channel(), args.duration)
    report["feasible"] = True
    report["plan"] = plan.to_dict()
    report["mcc"] = mcc.to_dict()
    report["ucc"] = ucc.to_dict()
    return EXIT_OK, report


def cmd_search(cfg: RunConfig, args) -> tuple[int, dict]:
    sc = cfg.search
    if args.sat_threshold is not None:
        try:
            sc = replace(sc, sat_threshold=args.sat_threshold)
        except ValueError as e:
            raise UsageError(f"--sat-threshold: {e}") from None
    trace = Path(args.trace) if args.trace else cfg.trace_path
    if trace is not None:
        if not trace.is_file():
            raise FileNotFoundError(f"trace not found: {trace}")
        try:
            profiler = search.TraceProfiler.from_file(trace)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    else:
        profiler = search.SyntheticCostModel()
    num_gpu = len(cfg.topology.gpus)
    res = search.explore(cfg.workload.name, num_gpu, sc, profiler, cfg.workload)
    report = {"command": "search", "workload": cfg.workload.name, "num_gpu": num_gpu,
              "profiler": "trace" if trace is not None else "synthetic",
              "sat_threshold": sc.sat_threshold} | res.to_dict()
    return (EXIT_OK if res.feasible else EXIT_DOMAIN), report


COMMANDS = {"validate": cmd_validate, "plan": cmd_plan, "reduce": cmd_reduce,
            "pipeline": cmd_pipeline, "search": cmd_search}


def render_text(report: dict) -> str:
    cmd = report["command"]
    lines = []
    if cmd == "validate":
        lines.append("layout ok" if report["ok"] else "layout INVALID")
        lines += [f"  GPU {v['gpu']}: {v['message']} [{v['rule']}]" for v in report["violations"]]
    elif cmd == "plan":
        lines.append(f"mode {report['mode']}, workload {report['workload']}, R_all {report['total_resource']:g}")
        for key in ("serving", "training"):
            if key in report:
                c = report[key]
                for side in ("dedicated", "colocated"):
                    e = c[side]
                    lines.append(f"  {e['template']:<7} R={e['resource_size']:.4g} COM={e['comm_size']:.6g} "
                                 f"TOP={e['throughput']:.4g}")
                lines.append(f"  {c['colocated']['template']}/{c['dedicated']['template']} ratio "
                             f"{c['ratio']:.3g}x, colocation penalty {c['resource_penalty']:.3g}")
        if report["feasible"]:
            cmp_ = report.get("training") or report.get("serving")
            lines.append(f"{report['selected']} selected, est. ratio ~{cmp_['ratio']:.3g}x over "
                         f"{cmp_['dedicated']['template']}; GPU layout {report['plan']['gpu_layout']}")
        else:
            lines.append(f"{report['selected']} selected but infeasible: {report['error']}")
    elif cmd == "reduce":
        sel = report["selected"]
        others = ", ".join(f"{k} {v:.6g}" if v is not None else f"{k} n/a"
                           for k, v in report["predicted"].items() if k != sel)
        lines.append(f"{sel} selected, latency {report['predicted'][sel]:.6g} ({others})")
        lines.append(f"  layout {report['layout']}, payload {report['payload_bytes']} bytes")
        if "latency" in report:
            lines.append(f"executed {report['executed']}: trace latency {report['latency']:.6g}, "
                         f"matches prediction: {report['latency_matches_prediction']}")
            lines.append(f"  trace: {report['trace']['events']} events over {report['trace']['steps']} steps")
        if "error" in report:
            lines.append(f"error: {report['error']}")
    elif cmd == "pipeline":
        if not report["feasible"]:
            lines.append(f"infeasible: {report['error']}")
        else:
            lines.append(f"{'':<16}{'MCC':>14}{'UCC':>14}")
            for key in ("pps", "ttop", "link_throughput", "records_dispensed", "records_trained", "units_sent"):
                lines.append(f"{key:<16}{report['mcc'][key]:>14.6g}{report['ucc'][key]:>14.6g}")
    elif cmd == "search":
        if report["feasible"]:
            lines.append(f"num_env {report['num_env']}, GMIs/GPU {report['gmis_per_gpu']}, "
                         f"est. throughput {report['throughput']:.6g}" + (" (fallback)" if report["fallback"] else ""))
        else:
            lines.append("infeasible: no runnable configuration")
        for v in report["visited"]:
            sat = "inf" if v["sat_inf"] else ("-" if v["sat"] is None else f"{v['sat']:.4g}")
            lines.append(f"  gpg={v['gmis_per_gpu']:>2} env={v['num_env']:>5} {v['action']:<8} sat={sat}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load(args)
        code, report = COMMANDS[args.command](cfg, args)
    except (ConfigError, UsageError, FileNotFoundError, KeyError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"gmiplan: error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    if args.format in ("json", "structured"):
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        print(render_text(report))
    return code


if __name__ == "__main__":
    sys.exit(main())
