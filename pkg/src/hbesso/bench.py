"""Benchmark harness: cipher throughput by key size and an execution-time
comparison of three encryption pipelines (raw counter mode, seal with its
MAC, and full sealed-assertion issuance including serialization).

Timings are medians over repeated runs; single-shot numbers are too noisy
to compare.  Reported MB/s is always megabytes/seconds recomputed from the
reported (3-decimal) values, so every emitted row is self-consistent.
Monotonicity of time in key size is a warn-level check, not a failure:
background load can perturb any single run.
"""

from __future__ import annotations

import base64
import csv
import io
import platform
import statistics
import time
from dataclasses import dataclass, field
from random import Random
from typing import Optional

import numpy as np

from . import cipher, saml
from . import keyexchange as kx

KEY_SIZES = (128, 192, 256)
MB = 1_000_000


def median_of(values: list[float]) -> float:
    return float(statistics.median(values))


def machine_descriptor() -> str:
    return f"{platform.platform()} / {platform.python_implementation()} {platform.python_version()}"


@dataclass(frozen=True)
class BenchRow:
    label: str
    key_bits: int
    megabytes: float
    seconds: float
    mb_per_s: float


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    machine: str = ""
    repetitions: int = 0


@dataclass(frozen=True)
class ComparisonRow:
    key_bits: int
    cipher_only_ms: float
    cipher_mac_ms: float
    assertion_ms: float


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow] = field(default_factory=list)
    payload_bytes: int = 0
    machine: str = ""
    repetitions: int = 0


def _finish_row(label: str, key_bits: int, megabytes: float, median_s: float) -> BenchRow:
    seconds = max(round(median_s, 3), 0.001)
    return BenchRow(
        label=label,
        key_bits=key_bits,
        megabytes=megabytes,
        seconds=seconds,
        mb_per_s=round(megabytes / seconds, 3),
    )


def bench_throughput(
    key_bits: int,
    megabytes: float,
    repetitions: int = 5,
    round_trip: bool = False,
    rng: Optional[Random] = None,
) -> BenchRow:
    """Counter-mode encryption of a random buffer; the row carries the
    median repetition.  With round_trip the buffer is also decrypted, for
    exploring timings that may have measured both directions."""
    if key_bits not in KEY_SIZES:
        raise ValueError(f"key size must be one of {KEY_SIZES}")
    if megabytes < 1:
        raise ValueError("megabytes must be at least 1")
    if repetitions < 3:
        raise ValueError("repetitions must be at least 3")
    rng = rng or Random()
    key = kx.rand_bytes(rng, key_bits // 8)
    schedule = cipher.expand_key(key)
    total_bytes = int(megabytes * MB)
    nblocks = (total_bytes + 15) // 16
    data = np.frombuffer(rng.randbytes(total_bytes), dtype=np.uint8)
    nonce = kx.rand_bytes(rng, 12)
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        stream = np.frombuffer(
            cipher.ctr_keystream(schedule, nonce, nblocks), dtype=np.uint8
        )[:total_bytes]
        ct = data ^ stream
        if round_trip:
            stream2 = np.frombuffer(
                cipher.ctr_keystream(schedule, nonce, nblocks), dtype=np.uint8
            )[:total_bytes]
            _ = ct ^ stream2
        times.append(time.perf_counter() - start)
    label = "ctr round-trip" if round_trip else "ctr encrypt"
    return _finish_row(label, key_bits, megabytes, median_of(times))


def throughput_report(
    megabytes: float,
    repetitions: int = 5,
    key_sizes: tuple[int, ...] = KEY_SIZES,
    round_trip: bool = False,
    rng: Optional[Random] = None,
) -> BenchReport:
    rows = [
        bench_throughput(bits, megabytes, repetitions, round_trip=round_trip, rng=rng)
        for bits in key_sizes
    ]
    return BenchReport(rows=rows, machine=machine_descriptor(), repetitions=repetitions)


def _time_pipelines(key_bits: int, payload: bytes, repetitions: int, rng: Random) -> ComparisonRow:
    key = kx.rand_bytes(rng, key_bits // 8)
    fed_key_id = f"bench-{key_bits}"
    nonce = kx.rand_bytes(rng, 12)
    nblocks = (len(payload) + 15) // 16
    payload_np = np.frombuffer(payload, dtype=np.uint8)
    subject = base64.b64encode(payload).decode("ascii")
    now = time.time()

    def cipher_only() -> None:
        schedule = cipher.expand_key(key)
        stream = np.frombuffer(
            cipher.ctr_keystream(schedule, nonce, nblocks), dtype=np.uint8
        )[: len(payload)]
        _ = payload_np ^ stream

    def with_mac() -> None:
        kx.seal(key, nonce, payload)

    def full_assertion() -> None:
        assertion = saml.build_assertion("bench-idp", subject, "bench-sp", now, 300)
        saml.encrypt_assertion(assertion, key, fed_key_id)

    medians = []
    for pipeline in (cipher_only, with_mac, full_assertion):
        times = []
        for _ in range(repetitions):
            start = time.perf_counter()
            pipeline()
            times.append(time.perf_counter() - start)
        medians.append(round(median_of(times) * 1000, 3))
    return ComparisonRow(
        key_bits=key_bits,
        cipher_only_ms=medians[0],
        cipher_mac_ms=medians[1],
        assertion_ms=medians[2],
    )


def bench_comparison(
    payload_bytes: int,
    repetitions: int = 5,
    key_sizes: tuple[int, ...] = KEY_SIZES,
    rng: Optional[Random] = None,
) -> ComparisonReport:
    """Three pipelines on identical payloads, one row per key size."""
    if payload_bytes < 1:
        raise ValueError("payload must be at least 1 byte")
    if repetitions < 3:
        raise ValueError("repetitions must be at least 3")
    rng = rng or Random()
    payload = rng.randbytes(payload_bytes)
    rows = [_time_pipelines(bits, payload, repetitions, rng) for bits in key_sizes]
    return ComparisonReport(
        rows=rows,
        payload_bytes=payload_bytes,
        machine=machine_descriptor(),
        repetitions=repetitions,
    )


def check_monotone(values: list[float]) -> bool:
    return all(a <= b for a, b in zip(values, values[1:]))


def _monotone_flag(values: list[float]) -> str:
    return "pass" if check_monotone(values) else "warn"


def emit_table(report: BenchReport | ComparisonReport, fmt: str = "text") -> str:
    if fmt not in ("text", "csv"):
        raise ValueError(f"format must be text or csv, got {fmt!r}")
    if isinstance(report, BenchReport):
        return _emit_throughput(report, fmt)
    return _emit_comparison(report, fmt)


def _emit_throughput(report: BenchReport, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["key_bits", "megabytes_processed", "seconds", "mb_per_second"])
        for row in report.rows:
            writer.writerow([row.key_bits, row.megabytes, row.seconds, row.mb_per_s])
        return buf.getvalue()
    lines = ["cipher running time by key length"]
    header = f"{'key bits':>8}  {'MB processed':>12}  {'time (s)':>10}  {'MB/second':>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        lines.append(
            f"{row.key_bits:>8}  {row.megabytes:>12.3f}  {row.seconds:>10.3f}  {row.mb_per_s:>10.3f}"
        )
    if report.rows:
        lines.append(
            f"monotone in key size: {_monotone_flag([r.seconds for r in report.rows])}"
        )
    if report.machine:
        lines.append(f"machine: {report.machine} (median of {report.repetitions})")
    return "\n".join(lines) + "\n"


def _emit_comparison(report: ComparisonReport, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["key_bits", "cipher_only_ms", "cipher_mac_ms", "assertion_ms"])
        for row in report.rows:
            writer.writerow([row.key_bits, row.cipher_only_ms, row.cipher_mac_ms, row.assertion_ms])
        return buf.getvalue()
    lines = [f"execution time for encryption ({report.payload_bytes}-byte payload)"]
    header = (
        f"{'key bits':>8}  {'cipher only (ms)':>17}  "
        f"{'cipher+MAC (ms)':>16}  {'sealed assertion (ms)':>22}"
    )
    lines.append(header)
    lines.append("-" * len(header))
    for row in report.rows:
        lines.append(
            f"{row.key_bits:>8}  {row.cipher_only_ms:>17.3f}  "
            f"{row.cipher_mac_ms:>16.3f}  {row.assertion_ms:>22.3f}"
        )
    if report.rows:
        flags = [
            _monotone_flag([r.cipher_only_ms for r in report.rows]),
            _monotone_flag([r.cipher_mac_ms for r in report.rows]),
            _monotone_flag([r.assertion_ms for r in report.rows]),
        ]
        lines.append(
            "monotone in key size: "
            + ", ".join(
                f"{name}={flag}"
                for name, flag in zip(("cipher", "cipher+MAC", "assertion"), flags)
            )
        )
    if report.machine:
        lines.append(f"machine: {report.machine} (median of {report.repetitions})")
    return "\n".join(lines) + "\n"
