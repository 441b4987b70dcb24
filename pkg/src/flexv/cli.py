"""flexv-sim: benchmarks, verification, network runs and the ISA manual.

Exit status is 0 only when every tolerance and bit-exactness gate passes.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import bench
from .deploy import DEFAULT_BUDGET, DmaModel, load_network, run_network
from .deploy.tiling import TilingError
from .engine import load_timing
from .kernels import KernelError


def _write(path, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _pct(v):
    return "" if v is None else f"{100 * v:+.1f}%"


def cmd_bench(args) -> int:
    table = bench.load_table("table3")
    if args.table3:
        modes = [args.mode] if args.mode else list(bench.MODES)
        pairs = [args.precision] if args.precision else None
        cases = bench.table3_cases(modes, pairs, table)
    else:
        cases = [(args.precision or "a8w8", args.mode or "flexv")]
    timing = load_timing(contention=not args.no_contention)
    results = []
    for pair, mode in cases:
        res, _ = bench.bench_case(pair, mode, args.cores, args.seed, timing=timing)
        results.append(res)
        status = "PASS" if res.passed else "FAIL"
        exp = "" if res.expected is None else f" expected {res.expected:.2f} ({_pct(res.deviation)})"
        print(f"{status} {pair} {mode:8s} cores={res.cores} {res.mac_per_cycle:7.2f} MAC/cycle "
              f"{res.cycles} cycles{exp}{'' if res.bit_exact else ' OUTPUT MISMATCH'}")
    ok = all(r.passed for r in results)
    ratios = bench.speedups(results)
    gate = None
    if ratios:
        gate = bench.speedup_gate(ratios, table)
        for p, v in ratios.items():
            ref = gate["reference_ratios"].get(p)
            tail = f" (table ratio {ref:.2f})" if ref else ""
            print(f"speedup {p}: {v:.2f}x{tail}")
        print(f"speedup floor {table['speedup']['min']}x: {'PASS' if gate['floor'] else 'FAIL'}; "
              f"table ratios: {'PASS' if gate['table_ratios'] else 'FAIL'}; "
              f"best {gate['best']:.2f}x vs headline {table['speedup']['best_case']}x: "
              f"{'within' if gate['headline'] else 'outside'} tolerance")
        if args.cores == table["cores"]:
            ok = ok and gate["floor"] and gate["table_ratios"]
    if args.json:
        doc = {"schema_version": 1, "contention": not args.no_contention,
               "cases": [r.to_dict() for r in results], "speedup": gate, "passed": ok}
        _write(args.json, json.dumps(doc, indent=1) + "\n")
    if args.csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "mode", "cores", "cycles", "mac_per_cycle", "expected", "deviation",
                    "bit_exact", "passed"])
        for r in results:
            w.writerow([r.pair, r.mode, r.cores, r.cycles, f"{r.mac_per_cycle:.4f}",
                        "" if r.expected is None else r.expected,
                        "" if r.deviation is None else f"{r.deviation:.4f}", r.bit_exact,
                        r.passed])
        _write(args.csv, buf.getvalue())
    return 0 if ok else 1


def cmd_verify(args) -> int:
    pairs = [args.precision] if args.precision else list(bench.PAIRS)
    modes = [args.mode] if args.mode else list(bench.MODES)
    if args.inject and not args.mode:
        modes = ["flexv"]
    n = failed = 0
    for r in bench.verify_suite(args.count, args.seed, modes, pairs, fault=args.inject):
        n += 1
        if not r.passed:
            failed += 1
            print(r.describe())
        elif args.verbose:
            print(r.describe())
    print(f"{n - failed}/{n} cases bit-exact")
    return 0 if failed == 0 else 1


def cmd_run_network(args) -> int:
    net = load_network(args.network)
    res = run_network(net, args.mode, args.cores, args.budget,
                      DmaModel(args.dma_bandwidth, args.dma_startup), exact=not args.performance,
                      timing=load_timing(contention=not args.no_contention), seed=args.seed)
    print(f"{net.name}: {args.mode}, {args.cores} cores, L1 budget {args.budget} B "
          "(geometry-proxy model)")
    print(f"{'layer':10s} {'kind':9s} {'tiles':>6s} {'cycles':>10s} {'MAC/cycle':>9s}")
    for ly in res.layers:
        print(f"{ly.name:10s} {ly.kind:9s} {ly.n_tiles:6d} {ly.cycles:10d} {ly.mac_per_cycle:9.2f}")
    print(f"total: {res.macs} MACs in {res.cycles} cycles, {res.mac_per_cycle:.2f} MAC/cycle")
    print(f"footprint: {res.footprint} bytes of weights and quantization parameters")
    ok = True
    if res.bit_exact is not None:
        print("output bit-exact vs golden network" if res.bit_exact
              else f"OUTPUT MISMATCH: {res.mismatches[0]}")
        ok = res.bit_exact
    table = bench.load_table("table4")
    ref = table["networks"].get(Path(args.network).name)
    if ref and args.mode == "flexv" and args.cores == 8 and args.budget == DEFAULT_BUDGET:
        dev = res.mac_per_cycle / ref["mac_per_cycle"] - 1
        within = abs(dev) <= table["tolerance"]
        print(f"{'PASS' if within else 'FAIL'} expected {ref['mac_per_cycle']} MAC/cycle "
              f"({_pct(dev)}, tolerance {table['tolerance']:.0%})")
        ok = ok and within
    if args.json:
        _write(args.json, res.to_json(indent=1) + "\n")
    if args.output and res.output is not None:
        from .tensor import save_tensor
        save_tensor(res.output, args.output)
    return 0 if ok else 1


def cmd_isa_manual(args) -> int:
    from .manual import render
    _write(args.output, render())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flexv-sim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, cores=True):
        sp.add_argument("--mode", choices=bench.MODES)
        sp.add_argument("--precision", "--case", dest="precision", metavar="aXwY",
                        type=_pair)
        sp.add_argument("--seed", type=int, default=0)
        if cores:
            sp.add_argument("--cores", type=int, default=8, choices=range(1, 9), metavar="N")

    b = sub.add_parser("bench", help="single-layer MAC/cycle benchmarks")
    common(b)
    b.add_argument("--table3", action="store_true", help="run the reference table cases")
    b.add_argument("--json", metavar="PATH")
    b.add_argument("--csv", metavar="PATH")
    b.add_argument("--no-contention", action="store_true", help="disable TCDM bank conflicts")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="bit-exactness suite against the golden model")
    common(v, cores=False)
    v.add_argument("--count", type=int, default=20, help="geometries per pair and mode")
    v.add_argument("--inject", choices=sorted(bench.FAULTS), help="inject a CSR fault")
    v.add_argument("-v", "--verbose", action="store_true")
    v.set_defaults(func=cmd_verify)

    r = sub.add_parser("run-network", help="tiled end-to-end network run")
    r.add_argument("network", help="network JSON (bundled names are accepted)")
    r.add_argument("--mode", choices=bench.MODES, default="flexv")
    r.add_argument("--cores", type=int, default=8, choices=range(1, 9), metavar="N")
    r.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="L1 bytes")
    r.add_argument("--dma-bandwidth", type=int, default=DmaModel.bandwidth)
    r.add_argument("--dma-startup", type=int, default=DmaModel.startup)
    r.add_argument("--performance", action="store_true",
                   help="timing only: one simulation per distinct tile, random data")
    r.add_argument("--seed", type=int)
    r.add_argument("--json", metavar="PATH")
    r.add_argument("--output", metavar="PATH", help="write the final tensor (FXVT)")
    r.add_argument("--no-contention", action="store_true")
    r.set_defaults(func=cmd_run_network)

    m = sub.add_parser("isa-manual", help="print the ISA/CSR/timing manual")
    m.add_argument("--output", default="-")
    m.set_defaults(func=cmd_isa_manual)
    return p


def _pair(text: str) -> str:
    try:
        bench.parse_pair(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    return text.lower()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KernelError, TilingError, ValueError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
