"""Seeded Monte Carlo generation of detection events, plus event file I/O.

The joint law factorizes exactly: momenta (dkx, dky, domega) follow the
Gaussian spectral density independent of everything else, and upsilon is
Bernoulli given the momenta, with coincidence probability
(1 - V cos(w)) / 2. Sampling is therefore rejection-free; the tuned
strategy additionally thins emitted pairs with probability gamma
(post-selection survival).

Reproducibility contract: the RNG is counter-addressable Philox keyed by
(seed, chunk_index), 65536 pairs per chunk, five 64-bit draws per pair
(thinning, three momenta, upsilon). The pair index alone determines its
randomness, so output is bitwise independent of how chunks are scheduled
across workers.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import chi2

from .errors import DataFormatError, ValidationError
from .model import DetectionEvent, Offset3D, PolarizationSetting, SourceSpec
from .physics import bucket_coincidence_probability, strategy_scale, visibility

_CHUNK = 65536
_DRAWS_PER_PAIR = 5
GENERATOR_ID = f"philox4x64-chunk{_CHUNK}"

_FILE_FORMAT = "homloc-events"
_FILE_VERSION = 1
_COLUMNS = "pair_index,dkx,dky,domega,upsilon"


def scenario_digest(theta: Offset3D, p: PolarizationSetting, s: SourceSpec) -> str:
    """16-hex-char digest of (theta, polarization, source) for file headers."""
    parts = [
        "homloc-scenario-v1",
        *(f"{x:.17g}" for x in theta.as_tuple()),
        f"{p.nu:.17g}", f"{p.c_a:.17g}", f"{p.c_b:.17g}",
        f"{p.d_a:.17g}", f"{p.d_b:.17g}", p.strategy.value,
        *(f"{x:.17g}" for x in s.bandwidths()),
    ]
    return hashlib.sha256("|".join(parts).encode("ascii")).hexdigest()[:16]


@dataclass(frozen=True)
class EventBatch:
    """Columnar batch of detected pairs with its provenance.

    pair_index holds the global emitted-pair index of each retained pair,
    so post-selection thinning stays visible. events materializes the rows
    as DetectionEvent objects on demand.
    """

    dkx: np.ndarray
    dky: np.ndarray
    domega: np.ndarray
    upsilon: np.ndarray
    pair_index: np.ndarray
    n_emitted: int
    seed: int
    digest: str
    generator: str = GENERATOR_ID

    def __post_init__(self):
        n = len(self.dkx)
        if not (len(self.dky) == len(self.domega) == len(self.upsilon)
                == len(self.pair_index) == n):
            raise ValidationError("event columns must have equal length")
        if n > self.n_emitted:
            raise ValidationError(
                f"n_detected {n} exceeds n_emitted {self.n_emitted}")
        for name in ("dkx", "dky", "domega", "upsilon", "pair_index"):
            arr = getattr(self, name)
            arr.flags.writeable = False

    @property
    def n_detected(self) -> int:
        return len(self.dkx)

    @property
    def events(self) -> list[DetectionEvent]:
        return [
            DetectionEvent(dkx=float(self.dkx[i]), dky=float(self.dky[i]),
                           domega=float(self.domega[i]), upsilon=int(self.upsilon[i]))
            for i in range(self.n_detected)
        ]


def _uniforms(raw: np.ndarray) -> np.ndarray:
    # 53-bit mantissa uniforms strictly inside (0, 1); safe for ndtri
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53


def _chunk_events(seed, chunk_idx, n_pairs, sigma, th, v, gamma):
    """Generate one chunk; the (seed, chunk_idx) key fixes all randomness."""
    key = np.array([seed, chunk_idx], dtype=np.uint64)
    raw = np.random.Philox(key=key).random_raw(_DRAWS_PER_PAIR * n_pairs)
    u = _uniforms(raw).reshape(n_pairs, _DRAWS_PER_PAIR)
    keep = u[:, 0] < gamma
    if not np.any(keep):
        empty = np.empty(0)
        return empty, empty, empty, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    uk = u[keep]
    k = ndtri(uk[:, 1:4]) * sigma[None, :]
    w = k @ th
    p_coinc = 0.5 * (1.0 - v * np.cos(w))
    ups = np.where(uk[:, 4] < p_coinc, -1, +1).astype(np.int64)
    idx = chunk_idx * _CHUNK + np.nonzero(keep)[0].astype(np.int64)
    return k[:, 0], k[:, 1], k[:, 2], ups, idx


def sample_batch(seed: int, n_emitted: int, theta: Offset3D,
                 p: PolarizationSetting, s: SourceSpec,
                 n_jobs: int = 1) -> EventBatch:
    """Draw n_emitted pairs; retain per strategy; return the detected batch.

    Tuned: each pair survives post-selection with probability gamma.
    Non-tuned: every pair is retained. Retained pairs get Gaussian
    momenta and a Bernoulli upsilon with coincidence probability
    (1 - V cos(w)) / 2.

    n_jobs only schedules chunk generation (joblib threads); the result is
    bitwise identical for any value.
    """
    if n_emitted < 0:
        raise ValidationError(f"n_emitted must be nonnegative, got {n_emitted!r}")
    seed = int(seed)
    if not (0 <= seed < 2 ** 64):
        raise ValidationError(f"seed must fit in 64 bits, got {seed!r}")
    v = visibility(p).value
    gamma = strategy_scale(p)
    sigma = np.array(s.bandwidths(), dtype=float)
    th = np.array(theta.as_tuple(), dtype=float)

    n_chunks = (n_emitted + _CHUNK - 1) // _CHUNK
    sizes = [min(_CHUNK, n_emitted - c * _CHUNK) for c in range(n_chunks)]
    if n_jobs != 1 and n_chunks > 1:
        from joblib import Parallel, delayed
        parts = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_chunk_events)(seed, c, sizes[c], sigma, th, v, gamma)
            for c in range(n_chunks))
    else:
        parts = [_chunk_events(seed, c, sizes[c], sigma, th, v, gamma)
                 for c in range(n_chunks)]

    def cat(i, dtype):
        if not parts:
            return np.empty(0, dtype=dtype)
        return np.concatenate([part[i] for part in parts]).astype(dtype, copy=False)

    return EventBatch(
        dkx=cat(0, float), dky=cat(1, float), domega=cat(2, float),
        upsilon=cat(3, np.int64), pair_index=cat(4, np.int64),
        n_emitted=n_emitted, seed=seed,
        digest=scenario_digest(theta, p, s),
    )


@dataclass(frozen=True)
class EmpiricalCheckReport:
    """Goodness-of-fit summary for a batch against its nominal scenario.

    Five tests share the significance budget (Bonferroni): three per-axis
    variance z-tests, the coincidence-fraction z-test, and a binned
    chi-square test of the upsilon-given-phase law.
    """

    n_events: int
    significance: float
    z_threshold: float
    variance_z: tuple[float, float, float]
    variance_pass: tuple[bool, bool, bool]
    coincidence_z: float
    coincidence_pass: bool
    gof_stat: float
    gof_dof: int
    gof_pvalue: float
    gof_pass: bool
    passed: bool


def empirical_check(batch: EventBatch, theta: Offset3D, p: PolarizationSetting,
                    s: SourceSpec, significance: float = 0.01,
                    n_bins: int = 16) -> EmpiricalCheckReport:
    """Test a batch against the analytic law of the given scenario.

    Momentum marginals are checked through their variances, the branch
    mass through the coincidence fraction, and the interference structure
    through binned counts of upsilon conditional on cos(phase): within a
    bin the coincidence count is a sum of known-probability Bernoullis,
    giving a z statistic per bin and a chi-square overall.
    """
    n = batch.n_detected
    if n == 0:
        raise ValidationError("empirical_check requires a nonempty batch")
    if not (0.0 < significance < 1.0):
        raise ValidationError(f"significance must lie in (0, 1), got {significance!r}")

    n_tests = 5
    alpha = significance / n_tests
    z_thresh = float(ndtri(1.0 - alpha / 2.0))

    sigma = np.array(s.bandwidths(), dtype=float)
    cols = (batch.dkx, batch.dky, batch.domega)
    var_z = []
    for arr, sig in zip(cols, sigma):
        sample_var = float(np.var(arr, ddof=1)) if n > 1 else 0.0
        se = sig * sig * math.sqrt(2.0 / max(n - 1, 1))
        var_z.append((sample_var - sig * sig) / se)
    var_pass = tuple(abs(z) < z_thresh for z in var_z)

    v = visibility(p).value
    th = np.array(theta.as_tuple(), dtype=float)
    w = batch.dkx * th[0] + batch.dky * th[1] + batch.domega * th[2]
    p_coinc = 0.5 * (1.0 - v * np.cos(w))
    pc_total = bucket_coincidence_probability(theta, p, s)
    frac = float(np.mean(batch.upsilon == -1))
    denom = math.sqrt(max(pc_total * (1.0 - pc_total), 1e-300) / n)
    coin_z = (frac - pc_total) / denom
    coin_pass = abs(coin_z) < z_thresh

    # binned upsilon-given-phase: per bin, coincidence count is a sum of
    # independent Bernoulli(p_i) with p_i known from the tested scenario
    c = np.cos(w)
    edges = np.linspace(-1.0, 1.0, n_bins + 1)
    which = np.clip(np.digitize(c, edges) - 1, 0, n_bins - 1)
    stat = 0.0
    dof = 0
    for b in range(n_bins):
        mask = which == b
        pb = p_coinc[mask]
        variance = float(np.sum(pb * (1.0 - pb)))
        if variance < 10.0:
            continue  # too little Bernoulli variance for a normal z
        observed = float(np.sum(batch.upsilon[mask] == -1))
        expected = float(np.sum(pb))
        stat += (observed - expected) ** 2 / variance
        dof += 1
    pvalue = float(chi2.sf(stat, dof)) if dof > 0 else 1.0
    gof_pass = pvalue > alpha

    return EmpiricalCheckReport(
        n_events=n,
        significance=significance,
        z_threshold=z_thresh,
        variance_z=tuple(float(z) for z in var_z),
        variance_pass=var_pass,
        coincidence_z=float(coin_z),
        coincidence_pass=bool(coin_pass),
        gof_stat=float(stat),
        gof_dof=int(dof),
        gof_pvalue=pvalue,
        gof_pass=bool(gof_pass),
        passed=bool(all(var_pass) and coin_pass and gof_pass),
    )


def save_events(batch: EventBatch, path) -> None:
    """Write a batch: '#' + JSON header, column header, one CSV row per pair.

    Floats use 17 significant digits, which round-trips IEEE doubles
    bit-exactly.
    """
    header = {
        "format": _FILE_FORMAT,
        "version": _FILE_VERSION,
        "seed": batch.seed,
        "scenario_digest": batch.digest,
        "generator": batch.generator,
        "n_emitted": batch.n_emitted,
        "n_detected": batch.n_detected,
    }
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(_COLUMNS + "\n")
        for i in range(batch.n_detected):
            fh.write(f"{int(batch.pair_index[i])},{batch.dkx[i]:.17g},"
                     f"{batch.dky[i]:.17g},{batch.domega[i]:.17g},"
                     f"{int(batch.upsilon[i])}\n")


def load_events(path) -> EventBatch:
    """Parse an event file written by save_events; inverse up to bit identity.

    Raises DataFormatError with a 1-based line number on any malformed or
    truncated content.
    """
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("#"):
        raise DataFormatError("missing '#' JSON header", line=1)
    try:
        header = json.loads(lines[0][1:])
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"bad JSON header: {exc}", line=1) from exc
    if header.get("format") != _FILE_FORMAT:
        raise DataFormatError(
            f"unknown format {header.get('format')!r}, expected {_FILE_FORMAT!r}", line=1)
    if header.get("version") != _FILE_VERSION:
        raise DataFormatError(
            f"unsupported version {header.get('version')!r}", line=1)
    for key in ("seed", "scenario_digest", "n_emitted", "n_detected"):
        if key not in header:
            raise DataFormatError(f"header missing {key!r}", line=1)
    if len(lines) < 2 or lines[1] != _COLUMNS:
        raise DataFormatError(f"expected column header {_COLUMNS!r}", line=2)

    n_rows = len(lines) - 2
    if n_rows != header["n_detected"]:
        raise DataFormatError(
            f"header promises {header['n_detected']} rows, file has {n_rows}",
            line=len(lines))
    idx = np.empty(n_rows, dtype=np.int64)
    dkx = np.empty(n_rows)
    dky = np.empty(n_rows)
    dom = np.empty(n_rows)
    ups = np.empty(n_rows, dtype=np.int64)
    for r in range(n_rows):
        lineno = r + 3
        fields = lines[r + 2].split(",")
        if len(fields) != 5:
            raise DataFormatError(
                f"expected 5 comma-separated fields, got {len(fields)}", line=lineno)
        try:
            idx[r] = int(fields[0])
            dkx[r] = float(fields[1])
            dky[r] = float(fields[2])
            dom[r] = float(fields[3])
            ups[r] = int(fields[4])
        except ValueError as exc:
            raise DataFormatError(str(exc), line=lineno) from exc
        if ups[r] not in (-1, 1):
            raise DataFormatError(f"upsilon must be +1 or -1, got {ups[r]}", line=lineno)
    return EventBatch(
        dkx=dkx, dky=dky, domega=dom, upsilon=ups, pair_index=idx,
        n_emitted=int(header["n_emitted"]), seed=int(header["seed"]),
        digest=str(header["scenario_digest"]),
        generator=str(header.get("generator", "unknown")),
    )
