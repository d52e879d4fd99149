"""Physical-layer model: fading, packet delivery rate, airtime, MCS grid.

Channels are independent and block-constant within a scheduling window.
A link's packet delivery rate (PDR) q(h, mu) is nondecreasing in the
fading gain h and nonincreasing in the data rate mu; the airtime
tau(mu) of a fixed-size packet is strictly decreasing in mu. Those two
monotonicities are the reliability/latency trade-off everything else in
the package is built on.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .validation import check_channel_matrix, check_positive

#: Default discrete rate grid in Mb/s, spanning the supported interval
#: with roughly geometric spacing.
DEFAULT_MCS_TABLE = (1.6, 3.3, 4.9, 6.5, 9.8, 13.0)


class AnalyticPdr:
    """Closed-form PDR family q(h, mu) = exp(-eta(mu) / h).

    eta(mu) = eta0 * (2**(mu / mu0) - 1) is the SNR a rate-mu packet
    needs; the exponential fading tail then gives the success
    probability. Nondecreasing in h, nonincreasing in mu, exactly 0 at
    h = 0 and tending to 1 as h grows.
    """

    def __init__(self, eta0=1.0, mu0=13.0):
        self.eta0 = check_positive(eta0, "eta0")
        self.mu0 = check_positive(mu0, "mu0")

    def pdr(self, h, rate):
        h = np.asarray(h, dtype=float)
        eta = self.eta0 * (np.exp2(np.asarray(rate, dtype=float) / self.mu0) - 1.0)
        safe_h = np.where(h > 0, h, 1.0)
        out = np.where(h > 0, np.exp(-eta / safe_h), 0.0)
        return out if out.ndim else float(out)

    def descriptor(self):
        return {"kind": "analytic", "eta0": self.eta0, "mu0": self.mu0}


class TabulatedPdr:
    """PDR backend driven by packet-error-rate curves loaded from CSV.

    The file has header ``rate,snr,per`` with rows sorted by (rate, snr):
    one error curve per discrete rate, sampled over linear SNR. Lookups
    interpolate linearly in h within a curve (clamping at the curve
    ends) and linearly between the two bracketing rate curves.
    """

    def __init__(self, rates, snr_grids, per_grids, source=None):
        self.rates = np.asarray(rates, dtype=float)
        self.snr_grids = [np.asarray(g, dtype=float) for g in snr_grids]
        self.per_grids = [np.asarray(g, dtype=float) for g in per_grids]
        self.source = source
        if len(self.rates) == 0:
            raise ValueError("PER table must contain at least one rate curve")
        if np.any(np.diff(self.rates) <= 0):
            raise ValueError("PER table rates must be strictly increasing")
        for r, snr, per in zip(self.rates, self.snr_grids, self.per_grids):
            if len(snr) < 1 or np.any(np.diff(snr) <= 0):
                raise ValueError(f"PER curve for rate {r} must have increasing snr")
            if np.any((per < 0) | (per > 1)):
                raise ValueError(f"PER values for rate {r} must lie in [0, 1]")

    @classmethod
    def from_csv(cls, path):
        by_rate = {}
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            expected = {"rate", "snr", "per"}
            if reader.fieldnames is None or set(reader.fieldnames) != expected:
                raise ValueError(
                    f"PER table {path} must have header rate,snr,per, "
                    f"got {reader.fieldnames}"
                )
            for row in reader:
                by_rate.setdefault(float(row["rate"]), []).append(
                    (float(row["snr"]), float(row["per"]))
                )
        rates = sorted(by_rate)
        snr_grids, per_grids = [], []
        for r in rates:
            pts = by_rate[r]  # rows arrive sorted by (rate, snr)
            snr_grids.append([s for s, _ in pts])
            per_grids.append([p for _, p in pts])
        return cls(rates, snr_grids, per_grids, source=str(path))

    def _curve_pdr(self, idx, h):
        per = np.interp(h, self.snr_grids[idx], self.per_grids[idx])
        return 1.0 - per

    def pdr(self, h, rate):
        h = np.asarray(h, dtype=float)
        rate = np.asarray(rate, dtype=float)
        h, rate = np.broadcast_arrays(h, rate)
        # Bracketing curve indices; out-of-range rates clamp to the end
        # curves (weight 0), exact matches collapse to one curve.
        hi = np.searchsorted(self.rates, rate.ravel())
        hi_c = np.clip(hi, 0, len(self.rates) - 1)
        lo = np.clip(hi - 1, 0, len(self.rates) - 1)
        gap = self.rates[hi_c] - self.rates[lo]
        w = np.where(gap > 0, (rate.ravel() - self.rates[lo]) / np.where(gap > 0, gap, 1.0), 0.0)
        curves = np.stack(
            [self._curve_pdr(i, h.ravel()) for i in range(len(self.rates))]
        )
        flat = (1.0 - w) * curves[lo, np.arange(lo.size)] + w * curves[hi_c, np.arange(hi_c.size)]
        out = flat.reshape(h.shape)
        return out if out.ndim else float(out)

    def descriptor(self):
        return {"kind": "table", "path": self.source}


@dataclass
class PhyModel:
    """Channel count, packet size, rate interval, MCS grid, PDR backend."""

    n: int = 2
    packet_bits: int = 800
    rate_min: float = 1.6
    rate_max: float = 13.0
    mcs_table: tuple = DEFAULT_MCS_TABLE
    pdr_model: object = field(default_factory=AnalyticPdr)
    fading_mean: float = 4.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n={self.n} must be at least 1")
        if int(self.packet_bits) <= 0:
            raise ValueError(f"packet_bits={self.packet_bits} must be positive")
        self.packet_bits = int(self.packet_bits)
        self.rate_min = check_positive(self.rate_min, "rate_min")
        self.rate_max = check_positive(self.rate_max, "rate_max")
        check_positive(self.fading_mean, "fading_mean")
        table = tuple(float(r) for r in self.mcs_table)
        if not table:
            raise ValueError("mcs_table must be nonempty")
        if any(b <= a for a, b in zip(table, table[1:])):
            raise ValueError("mcs_table must be strictly increasing")
        if table[0] != self.rate_min:
            raise ValueError(
                f"rate_min={self.rate_min} must equal the smallest mcs_table entry {table[0]}"
            )
        if table[-1] > self.rate_max or table[0] < self.rate_min:
            raise ValueError("mcs_table entries must lie within [rate_min, rate_max]")
        self.mcs_table = table

    def check_rate(self, rate):
        rate = np.asarray(rate, dtype=float)
        if np.any(rate < self.rate_min - 1e-12) or np.any(rate > self.rate_max + 1e-12):
            raise ValueError(
                f"rate outside supported interval [{self.rate_min}, {self.rate_max}]"
            )
        return rate


def sample_fading(rng, m, n, fading_mean, batch=None):
    """Draw i.i.d. exponential power gains, (m, n) or (batch, m, n)."""
    if m < 1 or n < 1:
        raise ValueError(f"m={m} and n={n} must be at least 1")
    check_positive(fading_mean, "fading_mean")
    shape = (m, n) if batch is None else (batch, m, n)
    return rng.exponential(fading_mean, size=shape)


def pdr(phy, h, rate):
    """Packet delivery rate of one link at fading gain h and rate ``rate``."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("fading gain must be nonnegative")
    phy.check_rate(rate)
    return phy.pdr_model.pdr(h, rate)


def tx_time(rate, packet_bits):
    """Airtime in seconds of a packet_bits packet at ``rate`` Mb/s."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate <= 0):
        raise ValueError("rate must be positive")
    out = packet_bits / (rate * 1e6)
    return out if out.ndim else float(out)


def combined_pdr(phy, h_row, assign_row, rate):
    """Delivery rate over a system's assigned channels (success in any one).

    1 - prod_j (1 - assign_j * q(h_j, rate)); exactly 0 with no channel
    assigned.
    """
    h_row = np.asarray(h_row, dtype=float)
    assign_row = np.asarray(assign_row)
    if h_row.shape != assign_row.shape:
        raise ValueError(
            f"h_row shape {h_row.shape} does not match assign_row {assign_row.shape}"
        )
    q = pdr(phy, h_row, rate)
    return float(1.0 - np.prod(1.0 - assign_row * q))


def batch_combined_pdr(phy, channels, assign, rates):
    """Combined delivery rates for batched schedules, shape (..., m).

    ``channels`` is (..., m, n), ``assign`` (..., n, m), ``rates`` (..., m).
    """
    q = pdr(phy, channels, np.asarray(rates, dtype=float)[..., None])
    a = np.swapaxes(np.asarray(assign), -1, -2)
    return 1.0 - np.prod(1.0 - a * q, axis=-1)


def batch_channel_times(assign, rates, phy):
    """Per-channel airtime totals for batched schedules, shape (..., n)."""
    tau = tx_time(np.asarray(rates, dtype=float), phy.packet_bits)
    return np.einsum("...nm,...m->...n", np.asarray(assign, dtype=float), tau)


def channel_times(schedule, phy):
    """Nominal per-channel airtime totals of a schedule (length-n vector)."""
    tau = tx_time(schedule.rates, phy.packet_bits)
    return schedule.assign @ tau


def channel_time(schedule, phy, j):
    """Total airtime scheduled in channel j (sum of its transmissions)."""
    n = schedule.assign.shape[0]
    if not 0 <= j < n:
        raise ValueError(f"channel index {j} out of range for n={n}")
    return float(channel_times(schedule, phy)[j])


def mcs_floor(rate, table):
    """Largest table rate not above ``rate``; below-minimum rates clamp up.

    Idempotent, and the result is always a table member, so repeated
    quantization is harmless.
    """
    table = np.asarray(table, dtype=float)
    rate = np.asarray(rate, dtype=float)
    idx = np.searchsorted(table, rate + 1e-12) - 1
    out = table[np.clip(idx, 0, len(table) - 1)]
    return out if out.ndim else float(out)
