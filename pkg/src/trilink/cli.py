"""Command-line entry points: simulate, analyze, dump-tables."""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import coding, harness, phy
from .precoding import Scheme

_OVERRIDE_KEYS = (
    "seed", "n_batches", "frames_per_batch", "p_total_dbm", "model_payload_symbols",
    "n_taps", "pdp_decay", "temporal_rho", "serving_snr_low_db", "serving_snr_high_db",
    "cross_gain_db", "cross_gain_spread_db",
    "tx_evm_db", "rx_evm_db", "phase_std_deg", "sigma2_nominal", "thermal_jitter_db",
    "tx_noise_enabled", "rx_noise_enabled", "phase_enabled", "thermal_enabled",
)


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    for key in _OVERRIDE_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None,
                       metavar="V", help=f"override config key {key}")


def _build_config(args) -> harness.CampaignConfig:
    pairs = {}
    if args.config:
        with open(args.config) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, value = (part.strip() for part in line.split("=", 1))
                pairs[key] = value
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            pairs[key] = value
    if getattr(args, "batches", None) is not None:
        pairs["n_batches"] = args.batches
    if getattr(args, "schemes", None):
        pairs["schemes"] = args.schemes
    return harness.config_from_pairs(pairs)


def _cmd_simulate(args) -> int:
    cfg = _build_config(args)
    t0 = time.time()

    def progress(done, total):
        if args.quiet:
            return
        print(f"\rbatch {done}/{total} ({time.time() - t0:.0f} s)",
              end="", file=sys.stderr, flush=True)

    result = harness.run_campaign(cfg, out_dir=args.out, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
        with open(f"{args.out}/summary.txt") as fh:
            print(fh.read(), end="")
    return 0


def _cmd_analyze(args) -> int:
    cfg = _build_config(args)
    values = harness.analyze_trace(args.trace, Scheme(args.scheme), args.mode,
                                   out_dir=args.out, cfg=cfg)
    if not args.quiet:
        print(f"{args.scheme} {args.mode}: {values.size} values, "
              f"median {np.median(values):.2f} dB")
    return 0


def _cmd_dump_tables(args) -> int:
    """Conformance dump: QAM map, pilot sequences, LDPC structure."""
    import os
    os.makedirs(args.out, exist_ok=True)

    with open(os.path.join(args.out, "qam16_map.txt"), "w") as fh:
        fh.write("# bits re im\n")
        for label in range(16):
            bits = "".join(str(b) for b in phy.QAM16_BITS[label])
            c = phy.QAM16_TABLE[label]
            fh.write(f"{bits} {c.real:+.12f} {c.imag:+.12f}\n")

    with open(os.path.join(args.out, "pilots.txt"), "w") as fh:
        fh.write("# kind index subcarrier re im\n")
        for j in range(6):
            seq = phy.demod_pilot_sequence(j)
            for s, c in enumerate(seq):
                fh.write(f"demod {j} {s} {c.real:+.12f} {c.imag:+.12f}\n")
        for a in range(6):
            seq = phy.csi_pilot_sequence(a)
            for s, c in enumerate(seq):
                fh.write(f"csi {a} {s} {c.real:+.12f} {c.imag:+.12f}\n")

    code = coding.construct_code(harness.LDPC_SEED)
    coding.write_alist(code, os.path.join(args.out, "ldpc_1520_1140.alist"))
    if not args.quiet:
        print(f"wrote qam16_map.txt, pilots.txt, ldpc_1520_1140.alist to {args.out}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trilink",
                                     description="Three-cell MIMO-OFDM link simulator")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a measurement campaign")
    sim.add_argument("--config", help="flat key=value config file")
    sim.add_argument("--batches", default=None, metavar="N",
                     help="alias for --n-batches")
    sim.add_argument("--schemes", default=None,
                     help="comma list: ia,comp,tdma-simo,tdma-mimo,all-simo,all-mimo")
    sim.add_argument("--out", required=True, help="output directory")
    _add_override_flags(sim)
    sim.set_defaults(func=_cmd_simulate)

    ana = sub.add_parser("analyze", help="recompute a curve from a channel trace")
    ana.add_argument("--trace", required=True)
    ana.add_argument("--scheme", required=True,
                     choices=[s.value for s in harness.SCHEME_ORDER])
    ana.add_argument("--mode", required=True, choices=["ideal", "causal", "evm-model"])
    ana.add_argument("--out", default=None, help="directory for the cdf file")
    ana.add_argument("--config", help="flat key=value config file")
    _add_override_flags(ana)
    ana.set_defaults(func=_cmd_analyze)

    dump = sub.add_parser("dump-tables",
                          help="dump QAM map, pilots and LDPC structure")
    dump.add_argument("--out", required=True, help="output directory")
    dump.set_defaults(func=_cmd_dump_tables)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
