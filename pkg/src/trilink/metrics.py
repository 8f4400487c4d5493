"""EVM, SINDR, SINR-post bookkeeping, frame-error aggregation and CDFs."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

# SINDR from a vanishing EVM is reported as this dB sentinel so that CDFs
# and csv fields stay finite.
SINDR_CAP_DB = 60.0
SINDR_CAP_LINEAR = 10.0 ** (SINDR_CAP_DB / 10.0)

_STREAMS_PER_SCHEME = {"ia": 3, "comp": 3, "tdma-simo": 1, "tdma-mimo": 2,
                       "all-simo": 3, "all-mimo": 6}

CSV_FIELDS = ("batch", "frame", "scheme", "stream", "ms", "best_bs",
              "sinr_post_ideal_db", "sinr_post_causal_db",
              "sindr_evm_measured_db", "sindr_evm_model_db",
              "uncoded_frame_error", "coded_frame_error")


@dataclass(frozen=True)
class FrameMetrics:
    """One scored (batch, frame, scheme, stream) record."""

    batch: int
    frame: int
    scheme: str
    stream: int
    ms: int
    best_bs: bool
    sinr_post_ideal_db: float
    sinr_post_causal_db: float
    sindr_evm_measured_db: float
    sindr_evm_model_db: float
    uncoded_frame_error: bool
    coded_frame_error: bool


@dataclass(frozen=True)
class SchemeSummary:
    scheme: str
    fer: float
    cfer: float
    rate: float
    crate: float
    n_records: int


def to_db(linear) -> np.ndarray:
    return 10.0 * np.log10(linear)


def evm_per_subcarrier(received: np.ndarray, true_symbols: np.ndarray) -> np.ndarray:
    """Root of the error-vector variance per subcarrier, normalized by the
    power of the true constellation positions.

    Grids are (n_symbols, n_sc); EVM_i uses subcarrier i's column.
    """
    r = np.asarray(received, dtype=complex)
    s = np.asarray(true_symbols, dtype=complex)
    if r.shape != s.shape:
        raise ValueError("received and true grids must have identical shapes")
    if r.ndim != 2 or r.shape[0] < 1:
        raise ValueError("need at least one symbol per subcarrier")
    err = np.mean(np.abs(r - s) ** 2, axis=0)
    ref = np.mean(np.abs(s) ** 2, axis=0)
    if np.any(ref == 0):
        raise ValueError("true constellation power is zero on some subcarrier")
    return np.sqrt(err / ref)


def sindr_evm(evm: np.ndarray, channel_power: np.ndarray) -> float:
    """Power-weighted inverse-square EVM, the EVM-based SINDR estimate.

    Weights are the per-subcarrier effective-channel powers normalized to
    sum to one (so an impairment-free link reproduces its average SINR);
    vanishing EVMs are capped so the result never exceeds SINDR_CAP_DB.
    """
    evm = np.asarray(evm, dtype=float)
    p = np.asarray(channel_power, dtype=float)
    if evm.shape != p.shape:
        raise ValueError("evm and channel_power must have the same length")
    if np.any(p < 0):
        raise ValueError("channel powers must be >= 0")
    total = p.sum()
    if total == 0:
        raise ValueError("all-zero channel powers")
    weights = p / total
    inv = np.minimum(1.0 / np.maximum(evm, 1e-30) ** 2, SINDR_CAP_LINEAR)
    return float(min(np.dot(weights, inv), SINDR_CAP_LINEAR))


def throughput(n_streams: int, fer: float) -> float:
    """Per-frame rate in correct-stream units: n_s * (1 - FER)."""
    if not 0.0 <= fer <= 1.0:
        raise ValueError("fer must be in [0, 1]")
    return n_streams * (1.0 - fer)


def empirical_cdf(samples) -> tuple:
    """Sorted sample points and probabilities k/n."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("empirical_cdf needs at least one sample")
    return x, np.arange(1, x.size + 1) / x.size


def aggregate(records, selection: str = "all") -> dict:
    """Per-scheme FER / c-FER / rate / c-rate summaries.

    selection='best_bs' keeps only records whose MS is connected to its
    strongest BS (the same record selection is applied to every scheme,
    CoMP included, to keep results directly comparable).
    """
    if selection not in ("all", "best_bs"):
        raise ValueError(f"unknown selection {selection!r}")
    chosen = [r for r in records if selection == "all" or r.best_bs]
    if not chosen:
        raise ValueError(f"no records selected for {selection!r}")
    out = {}
    for scheme in sorted({r.scheme for r in chosen},
                         key=list(_STREAMS_PER_SCHEME).index):
        rs = [r for r in chosen if r.scheme == scheme]
        n_s = _STREAMS_PER_SCHEME[scheme]
        fer = float(np.mean([r.uncoded_frame_error for r in rs]))
        cfer = float(np.mean([r.coded_frame_error for r in rs]))
        out[scheme] = SchemeSummary(scheme=scheme, fer=fer, cfer=cfer,
                                    rate=throughput(n_s, fer),
                                    crate=throughput(n_s, cfer),
                                    n_records=len(rs))
    return out


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def write_metrics_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for r in records:
            w.writerow([r.batch, r.frame, r.scheme, r.stream, r.ms,
                        int(r.best_bs),
                        f"{r.sinr_post_ideal_db:.6f}",
                        f"{r.sinr_post_causal_db:.6f}",
                        f"{r.sindr_evm_measured_db:.6f}",
                        f"{r.sindr_evm_model_db:.6f}",
                        int(r.uncoded_frame_error), int(r.coded_frame_error)])


def read_metrics_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            out.append(FrameMetrics(
                batch=int(row["batch"]), frame=int(row["frame"]),
                scheme=row["scheme"], stream=int(row["stream"]),
                ms=int(row["ms"]), best_bs=bool(int(row["best_bs"])),
                sinr_post_ideal_db=float(row["sinr_post_ideal_db"]),
                sinr_post_causal_db=float(row["sinr_post_causal_db"]),
                sindr_evm_measured_db=float(row["sindr_evm_measured_db"]),
                sindr_evm_model_db=float(row["sindr_evm_model_db"]),
                uncoded_frame_error=bool(int(row["uncoded_frame_error"])),
                coded_frame_error=bool(int(row["coded_frame_error"]))))
    return out


def write_cdf(path, samples) -> None:
    """Two-column numeric text: value probability."""
    x, p = empirical_cdf(samples)
    with open(path, "w") as fh:
        for xi, pi in zip(x, p):
            fh.write(f"{xi:.10g} {pi:.10g}\n")


def write_summary(path, summary_all: dict, summary_best: dict) -> None:
    """Table-shaped text summary: All-data FER/c-FER, Best-BS adds rates."""
    lines = ["Method      |  All data       |  Best BS",
             "            |  FER    c-FER   |  FER    c-FER   rate   c-rate"]
    for scheme in summary_all:
        a = summary_all[scheme]
        b = summary_best.get(scheme)
        row = f"{scheme:<12}|  {a.fer:.2f}   {a.cfer:.2f}    |"
        if b is not None:
            row += f"  {b.fer:.2f}   {b.cfer:.2f}    {b.rate:.2f}   {b.crate:.2f}"
        lines.append(row)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
