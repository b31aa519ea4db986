"""Command-line entry points.

Subcommands: calibrate, run, compare, roofline, validate, synth-trace.
Every output file starts with (or embeds) the fully resolved configuration.
Exit status is nonzero iff a command reported an error or a validation
check failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import presets
from .config import (
    ConfigError,
    ExperimentSpec,
    apply_overrides,
    build_spec,
    resolved_config,
    run_config_from_args,
)
from .model_kernels import fc_aggregate, iteration_workload
from .pim_design import (
    area_feasible,
    config_area_feasible,
    dram_access_fraction,
    max_banks,
    pim_power,
)
from .roofline import classify
from .scheduler import CalibrationResult, SweepRow
from .sim_engine import (
    PlacementMode,
    calibrate_system,
    compare_baselines,
    simulate,
)
from .workload import TRACE_PRESETS, LengthDist, load_trace, synth_trace, write_trace


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, body: str, config: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "# config: " + json.dumps(config, sort_keys=True)
    path.write_text(header + "\n" + body)


def _spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    modes = tuple(PlacementMode(m) for m in getattr(args, "modes", "dynamic").split(","))
    spec = build_spec(
        model=args.model,
        system=args.system,
        run=run_config_from_args(args),
        seed=args.seed,
        trace_path=getattr(args, "trace", None),
        out_dir=args.out,
        modes=modes,
        overrides=args.set or [],
        sweep_max=getattr(args, "sweep_max", 512),
    )
    if modes and modes[0] is not spec.system.placement_mode:
        spec = dataclasses.replace(
            spec, system=dataclasses.replace(spec.system, placement_mode=modes[0])
        )
    return spec


def _resolve_trace(spec: ExperimentSpec, args: argparse.Namespace):
    if getattr(args, "trace", None):
        return load_trace(args.trace)
    preset = getattr(args, "synth", None) or "general-qa-like"
    if preset not in TRACE_PRESETS:
        raise ConfigError(f"synth preset {preset!r} not in {sorted(TRACE_PRESETS)}")
    input_dist, output_dist = TRACE_PRESETS[preset]
    return synth_trace(
        count=getattr(args, "count", 64),
        input_dist=input_dist,
        output_dist=output_dist,
        seed=spec.seed,
        arrival_rate=getattr(args, "arrival_rate", 0.0),
    )


def cmd_calibrate(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    result = calibrate_system(spec.system, spec.model, sweep_max=spec.sweep_max)
    payload = {
        "config": resolved_config(spec),
        "model": spec.model.name,
        "pu": spec.system.pu.label,
        "fc_pim": spec.system.fc_pim.shorthand,
        "alpha": result.alpha,
        "warnings": list(result.warnings),
        "sweep": [[row.parallelism, row.pu_latency, row.pim_latency] for row in result.rows],
    }
    out = Path(spec.out_dir) / "calibration.json"
    _write_json(out, payload)
    print(f"alpha={result.alpha} ({len(result.rows)} sweep rows) -> {out}")
    return 0


def _load_calibration(path: str) -> CalibrationResult:
    payload = json.loads(Path(path).read_text())
    rows = tuple(SweepRow(int(r[0]), float(r[1]), float(r[2])) for r in payload["sweep"])
    return CalibrationResult(alpha=int(payload["alpha"]), rows=rows,
                             warnings=tuple(payload.get("warnings", ())))


def cmd_run(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    trace = _resolve_trace(spec, args)
    calibration = None
    if args.calibration:
        calibration = _load_calibration(args.calibration)
    elif spec.system.placement_mode is PlacementMode.DYNAMIC:
        calibration = calibrate_system(spec.system, spec.model, sweep_max=spec.sweep_max)
    report = simulate(spec.system, spec.model, trace, spec.run, spec.energy, calibration)
    config = resolved_config(
        spec,
        trace=trace.source,
        alpha=calibration.alpha if calibration else None,
    )
    label = f"run-{spec.model.name}-{spec.system.label}-{spec.system.placement_mode.value}"
    out_dir = Path(spec.out_dir) / label
    _write_json(out_dir / "report.json", {"config": config, "aggregates": report.aggregates})
    _write_csv(out_dir / "iterations.csv", report.to_csv(), config)
    agg = report.aggregates
    print(
        f"{label}: {agg['iterations']} iterations, "
        f"{agg['total_latency_s']:.4f} s, {agg['tokens']} tokens, "
        f"{agg['migrations']} migrations -> {out_dir}"
    )
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    trace = _resolve_trace(spec, args)
    calibration = calibrate_system(spec.system, spec.model, sweep_max=spec.sweep_max)
    if args.preset_baselines:
        # Swap in the conventional baseline system per mode (the static-PU
        # modes pair with 1P1B / 1P2B attention arrays respectively).
        rows = []
        reports = {}
        for mode in spec.modes:
            base_system = presets.get_system(
                presets.MODE_BASELINE_SYSTEMS[mode], placement_mode=mode
            )
            cal = calibrate_system(base_system, spec.model, sweep_max=spec.sweep_max)
            reports[mode] = simulate(base_system, spec.model, trace, spec.run,
                                     spec.energy, cal)
        base_mode = PlacementMode.STATIC_GPU_FC
        if base_mode not in reports:
            base_system = presets.get_system(
                presets.MODE_BASELINE_SYSTEMS[base_mode], placement_mode=base_mode
            )
            cal = calibrate_system(base_system, spec.model, sweep_max=spec.sweep_max)
            reports[base_mode] = simulate(base_system, spec.model, trace, spec.run,
                                          spec.energy, cal)
        base = reports[base_mode].aggregates
        for mode in spec.modes:
            agg = reports[mode].aggregates
            rows.append((mode.value,
                         agg["total_latency_s"],
                         base["total_latency_s"] / agg["total_latency_s"],
                         agg["tokens_per_joule"],
                         agg["tokens_per_joule"] / base["tokens_per_joule"]))
    else:
        table = compare_baselines(
            spec.system, spec.model, trace, spec.run, spec.energy, calibration,
            modes=spec.modes,
        )
        rows = [(r.mode.value, r.total_latency_s, r.speedup,
                 r.tokens_per_joule, r.energy_efficiency_ratio) for r in table]
    config = resolved_config(spec, trace=trace.source, alpha=calibration.alpha)
    body = "mode,total_latency_s,speedup_vs_static_gpu,tokens_per_joule,energy_efficiency_ratio\n"
    for mode, lat, speedup, tpj, eff in rows:
        body += f"{mode},{lat!r},{speedup!r},{tpj!r},{eff!r}\n"
    out = Path(spec.out_dir) / "compare.csv"
    _write_csv(out, body, config)
    for mode, lat, speedup, tpj, eff in rows:
        print(f"{mode:>16}: latency {lat:.4f} s, speedup {speedup:.3f}x, "
              f"energy-eff {eff:.3f}x")
    print(f"-> {out}")
    return 0


def cmd_roofline(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    batches = [int(b) for b in args.batches.split(",")]
    spec_lens = [int(s) for s in args.spec_lens.split(",")]
    ctx = args.ctx
    body = "kernel,batch,spec_len,arithmetic_intensity,boundedness\n"
    lines = []
    for batch in batches:
        for spec_len in spec_lens:
            works = iteration_workload(spec.model, batch, spec_len, [ctx] * batch)
            fc = fc_aggregate(works)
            attn = next(w for w in works if w.kind.value == "attention")
            for name, work in (("fc", fc), ("attention", attn)):
                bound = classify(work, spec.system.pu)
                row = (name, batch, spec_len, work.arithmetic_intensity, bound.value)
                lines.append(row)
                body += f"{name},{batch},{spec_len},{row[3]!r},{bound.value}\n"
    out = Path(spec.out_dir) / "roofline.csv"
    _write_csv(out, body, resolved_config(spec))
    for name, batch, spec_len, ai, bound in lines:
        print(f"{name:>9} batch={batch:<4} spec={spec_len:<2} AI={ai:9.2f}  {bound}")
    print(f"-> {out}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    spec = _spec_from_args(args)
    area = spec.area
    energy = spec.energy.pim
    fc = spec.system.fc_pim
    attn = spec.system.attn_pim
    budget = energy.power_budget

    checks: list[tuple[str, bool, str]] = []

    def check(name: str, passed: bool, detail: str) -> None:
        checks.append((name, passed, detail))

    limit = max_banks(fc.fpus_per_group, area)
    check("area.fc_bank_limit", limit == 97,
          f"max banks at {fc.fpus_per_group} FPUs/bank = {limit} (expect 97)")
    check("area.fc_preset_feasible",
          area_feasible(fc.fpus_per_group, fc.num_banks, area),
          f"{fc.shorthand} with {fc.num_banks} banks fits {area.a_max} mm^2")
    check("area.attn_preset_feasible", config_area_feasible(attn, area),
          f"{attn.shorthand} with {attn.num_banks} banks fits {area.a_max} mm^2")

    frac1 = dram_access_fraction(1, energy)
    frac64 = dram_access_fraction(64, energy)
    check("energy.dram_fraction_no_reuse", abs(frac1 - 0.967) < 1e-9,
          f"reuse=1 DRAM share = {frac1:.6f} (expect 0.967)")
    check("energy.dram_fraction_reuse_64", abs(frac64 - 0.331) <= 0.05,
          f"reuse=64 DRAM share = {frac64:.6f} (expect 0.331 +/- 0.05)")

    p1 = pim_power(fc, 1, energy)
    p4 = pim_power(fc, 4, energy)
    check("power.fc_no_reuse_over_budget", p1 > budget,
          f"{fc.shorthand} at reuse=1 draws {p1:.1f} W (> {budget} W)")
    check("power.fc_reuse4_within_budget", p4 <= budget * (1 + 1e-9),
          f"{fc.shorthand} at reuse=4 draws {p4:.1f} W (<= {budget} W)")
    pa = pim_power(attn, 1, energy)
    check("power.attn_no_reuse_within_budget", pa <= budget,
          f"{attn.shorthand} at reuse=1 draws {pa:.1f} W (<= {budget} W)")

    weights = spec.model.fc_weight_bytes
    fc_capacity = fc.capacity * spec.system.fc_pim_count
    check("capacity.fc_weights_fit", weights <= fc_capacity,
          f"model weights {weights/1e9:.1f} GB vs FC capacity {fc_capacity/1e9:.1f} GB")

    payload = {
        "config": resolved_config(spec),
        "checks": [{"name": n, "passed": p, "detail": d} for n, p, d in checks],
        "passed": all(p for _, p, _ in checks),
    }
    _write_json(Path(spec.out_dir) / "validate.json", payload)
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return 0 if payload["passed"] else 1


def cmd_synth_trace(args: argparse.Namespace) -> int:
    if args.preset not in TRACE_PRESETS:
        raise ConfigError(f"synth preset {args.preset!r} not in {sorted(TRACE_PRESETS)}")
    input_dist, output_dist = TRACE_PRESETS[args.preset]
    if args.input_median:
        input_dist = LengthDist("lognormal", args.input_median, 0.6)
    if args.output_median:
        output_dist = LengthDist("lognormal", args.output_median, 0.8)
    trace = synth_trace(args.count, input_dist, output_dist, args.seed,
                        arrival_rate=args.arrival_rate)
    out = Path(args.out_file)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out, header_comment=f"preset={args.preset} seed={args.seed}")
    print(f"{args.count} requests -> {out}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", default="gpt3-175b",
                        help="model preset name or JSON file")
    parser.add_argument("--system", default="hybrid",
                        help="system preset name or JSON file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a resolved config field", default=[])


def _add_run_knobs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--trace", help="trace file path")
    parser.add_argument("--synth", help="synthetic trace preset", default=None)
    parser.add_argument("--count", type=int, default=64, help="synthetic request count")
    parser.add_argument("--arrival-rate", dest="arrival_rate", type=float, default=0.0)
    parser.add_argument("--policy", choices=["static", "mixed-continuous"],
                        default="static")
    parser.add_argument("--batch", type=int, default=4, help="static batch size")
    parser.add_argument("--max-rlp", dest="max_rlp", type=int, default=128)
    parser.add_argument("--spec-len", dest="spec_len", type=int, default=1)
    parser.add_argument("--acceptance", type=float, default=1.0)
    parser.add_argument("--migration-penalty", dest="migration_penalty",
                        type=float, default=0.0)
    parser.add_argument("--comm-overlap", dest="comm_overlap", type=float, default=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pimdecode",
        description="Iteration-level simulator for LLM decoding on a "
                    "heterogeneous PU + PIM system",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="sweep the FC placement threshold")
    _add_common(p)
    p.add_argument("--sweep-max", dest="sweep_max", type=int, default=512)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="simulate one trace")
    _add_common(p)
    _add_run_knobs(p)
    p.add_argument("--modes", default="dynamic",
                   help="placement mode (first entry is used)")
    p.add_argument("--calibration", help="calibration file from `calibrate`")
    p.add_argument("--sweep-max", dest="sweep_max", type=int, default=512)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="compare placement modes on one trace")
    _add_common(p)
    _add_run_knobs(p)
    p.add_argument("--modes",
                   default="dynamic,static-gpu-fc,pim-only,static-hbm-pim")
    p.add_argument("--preset-baselines", action="store_true",
                   help="pair each mode with its conventional baseline system")
    p.add_argument("--sweep-max", dest="sweep_max", type=int, default=512)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("roofline", help="AI and boundedness sweep on the PU")
    _add_common(p)
    p.add_argument("--batches", default="4,8,16,32,64,128")
    p.add_argument("--spec-lens", dest="spec_lens", default="8")
    p.add_argument("--ctx", type=int, default=2048, help="context length per request")
    p.set_defaults(func=cmd_roofline)

    p = sub.add_parser("validate", help="check area, power and energy anchors")
    _add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth-trace", help="generate a synthetic trace file")
    p.add_argument("--preset", default="general-qa-like",
                   choices=sorted(TRACE_PRESETS))
    p.add_argument("--count", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arrival-rate", dest="arrival_rate", type=float, default=0.0)
    p.add_argument("--input-median", dest="input_median", type=int, default=0)
    p.add_argument("--output-median", dest="output_median", type=int, default=0)
    p.add_argument("--out-file", dest="out_file", default="trace.csv")
    p.set_defaults(func=cmd_synth_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
