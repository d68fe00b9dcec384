"""RIS-assisted uplink channel model and success-probability estimation.

The reflected link is Rician per element: a deterministic line-of-sight part
keyed to path lengths, plus a circularly-symmetric scattered part whose power
follows the urban-macro NLoS path loss of the same total path length. Because
the scattered parts are independent complex Gaussians, the whole RIS sum
collapses to one complex Gaussian with a computable mean and variance, which
is what the Monte Carlo estimator and the per-slot samplers use. A per-element
sampler is kept alongside it for cross-checking.

All distances in meters, powers in watts, SINR thresholds linear.
"""
import math
from dataclasses import dataclass

import numpy as np

SQRT_HALF = math.sqrt(0.5)


def data_rate(sf, bandwidth, code_rate):
    """Bit rate (bits/s) of a chirp-spread symbol: B * s / 2^s * CR."""
    return bandwidth * sf / (2.0 ** sf) * code_rate


def reflection_factor(rho, bits, amplitude=1.0):
    """Complex reflection coefficient A * exp(-j tau) of a pin-diode element.

    rho is the integer phase word (scalar or array) of a bits-bit element,
    tau = pi * rho / 2^(bits-1).
    """
    tau = math.pi * np.asarray(rho, dtype=float) / (2.0 ** (bits - 1))
    out = amplitude * np.exp(-1j * tau)
    return complex(out) if np.isscalar(rho) else out


def nlos_pathloss_uma(dist, carrier_freq, ue_height=1.5):
    """Linear power gain of the UMa NLoS model (3GPP TR 38.901 style).

    PL_dB = 13.54 + 39.08 log10(d) + 20 log10(fc_GHz) - 0.6 (h_UE - 1.5)
    """
    d = np.asarray(dist, dtype=float)
    pl_db = (13.54 + 39.08 * np.log10(d) + 20.0 * np.log10(carrier_freq / 1e9)
             - 0.6 * (ue_height - 1.5))
    out = 10.0 ** (-pl_db / 10.0)
    return float(out) if np.isscalar(dist) else out


def los_component(bs, element_xyz, dev, radio):
    """Deterministic line-of-sight gains for one or more RIS elements.

    element_xyz has shape (..., 3). Amplitude sqrt(G * D^-iota * d^-iota)
    with D the BS-element and d the element-device distance; phase is the
    plane-wave delay over the total path D + d.
    """
    el = np.asarray(element_xyz, dtype=float)
    bsv = np.array([bs.x, bs.y, bs.z])
    dvv = np.array([dev.x, dev.y, dev.z])
    D = np.linalg.norm(el - bsv, axis=-1)
    d = np.linalg.norm(el - dvv, axis=-1)
    amp = np.sqrt(radio.antenna_gain * D ** -radio.pathloss_exp * d ** -radio.pathloss_exp)
    k = 2.0 * math.pi / radio.wavelength
    return amp * np.exp(-1j * k * (D + d)), D + d


@dataclass(frozen=True)
class PhaseShiftMatrix:
    """Integer phase words of one RIS, plus the resolution they live in."""

    words: np.ndarray  # (rows, cols) ints in [0, 2^bits)
    bits: int

    def factors(self, amplitude=1.0):
        return reflection_factor(self.words, self.bits, amplitude)


def optimal_phase_words(geom, bs, target, radio):
    """Phase words that align every element's reflection toward a target point.

    Each element compensates its own path delay: rho = floor(-k L * 2^b / 2pi)
    mod 2^b with L = |BS - element| + |element - target|, so the quantized
    phases sum near-coherently at the target.
    """
    el = np.asarray(geom.element_positions, dtype=float)
    bsv = np.array([bs.x, bs.y, bs.z])
    tv = np.array([target.x, target.y, target.z])
    L = np.linalg.norm(el - bsv, axis=-1) + np.linalg.norm(el - tv, axis=-1)
    k = 2.0 * math.pi / radio.wavelength
    n_levels = 2 ** radio.pin_bits
    words = np.floor(-k * L * n_levels / (2.0 * math.pi)).astype(np.int64) % n_levels
    return PhaseShiftMatrix(words, radio.pin_bits)


def constant_phase_words(geom, rho, bits):
    words = np.full((geom.rows, geom.cols), int(rho) % (2 ** bits), dtype=np.int64)
    return PhaseShiftMatrix(words, bits)


def phase_matrices(scenario):
    """One PhaseShiftMatrix per RIS according to the scenario's phase mode."""
    from .scenario import parse_phase_mode

    kind, rho = parse_phase_mode(scenario.phase_shift_mode)
    if kind == "constant":
        return tuple(constant_phase_words(g, rho, scenario.radio.pin_bits)
                     for g in scenario.riss)
    target = scenario.ue_centroid
    return tuple(optimal_phase_words(g, scenario.bs, target, scenario.radio)
                 for g in scenario.riss)


def ris_gain_stats(geom, phases, dev, bs, radio):
    """Collapsed statistics of the summed reflected gain: (mean S, variance).

    The sum over elements of reflection * (LoS + scattered) is S + c where
    S = w1 * sum_l refl_l * hlos_l is deterministic and c is complex Gaussian
    with variance w2^2 A^2 sum_l PL(L_l), w1^2 = zeta/(zeta+1), w2^2 = 1/(zeta+1).
    """
    hlos, L = los_component(bs, geom.element_positions, dev, radio)
    refl = phases.factors(radio.reflection_amplitude)
    zeta = radio.rician_factor
    w1 = math.sqrt(zeta / (zeta + 1.0))
    w2sq = 1.0 / (zeta + 1.0)
    S = w1 * complex(np.sum(refl * hlos))
    pl = nlos_pathloss_uma(L, radio.carrier_freq, dev.z)
    sigma_c2 = w2sq * radio.reflection_amplitude ** 2 * float(np.sum(pl))
    return S, sigma_c2


def sample_ris_channel(geom, phases, dev, bs, radio, rng):
    """Per-element draw of the summed reflected gain (2 * n_elements normals).

    Slow reference path; the collapsed sampler is distributionally identical.
    """
    hlos, L = los_component(bs, geom.element_positions, dev, radio)
    pl = nlos_pathloss_uma(L, radio.carrier_freq, dev.z)
    g = (rng.standard_normal(hlos.shape) + 1j * rng.standard_normal(hlos.shape)) * SQRT_HALF
    zeta = radio.rician_factor
    w1 = math.sqrt(zeta / (zeta + 1.0))
    w2 = math.sqrt(1.0 / (zeta + 1.0))
    h = w1 * hlos + w2 * np.sqrt(pl) * g
    return complex(np.sum(phases.factors(radio.reflection_amplitude) * h))


def sample_ris_gain(S, sigma_c2, rng):
    """Collapsed draw: S plus one CN(0, sigma_c2) sample (2 normals)."""
    x = rng.standard_normal()
    y = rng.standard_normal()
    scale = math.sqrt(sigma_c2 * 0.5)
    return S + scale * complex(x, y)


def sample_ris_power(s_re, s_im, sigma_c2, rng):
    """|gain|^2 of a collapsed draw, kept as re^2 + im^2 so both backends
    produce the identical float (2 normals)."""
    scale = math.sqrt(sigma_c2 * 0.5)
    re = s_re + scale * rng.standard_normal()
    im = s_im + scale * rng.standard_normal()
    return re * re + im * im


def direct_shadow_mu(dev, bs, radio):
    """Nat-log mean of the direct-link power gain.

    With no explicit override, the mean power E[rho] = exp(mu + sigma^2/2) is
    anchored to the UMa NLoS loss at the BS distance, i.e.
    mu = ln(PL(d)) - sigma^2/2.
    """
    if radio.shadow_mu is not None:
        return radio.shadow_mu
    d = dev.distance_to(bs)
    pl = nlos_pathloss_uma(d, radio.carrier_freq, dev.z)
    return math.log(pl) - radio.shadow_sigma ** 2 / 2.0


def sample_direct_channel(dev, bs, radio, rng):
    """One draw of the direct (no RIS) complex gain: sqrt(rho) * CN(0,1).

    rho is log-normal shadowing; consumes 3 standard normals.
    """
    mu = direct_shadow_mu(dev, bs, radio)
    rho = math.exp(mu + radio.shadow_sigma * rng.standard_normal())
    x = rng.standard_normal()
    y = rng.standard_normal()
    return math.sqrt(rho) * SQRT_HALF * complex(x, y)


def sample_direct_power(mu, sigma, rng):
    """|gain|^2 of a direct draw without building the complex number (3 normals)."""
    rho = math.exp(mu + sigma * rng.standard_normal())
    x = rng.standard_normal()
    y = rng.standard_normal()
    return rho * 0.5 * (x * x + y * y)


def received_sinr(gain, radio):
    """Instantaneous SINR with the interference term at its mean square.

    The log-normal co-channel term y enters through E[y^2] =
    exp(2 mu_y + 2 sigma_y^2), making the denominator deterministic.
    """
    power = np.abs(np.asarray(gain)) ** 2
    out = radio.tx_power * power / radio.interference_plus_noise
    return float(out) if np.isscalar(gain) or out.ndim == 0 else out


def isotonic_non_decreasing(y):
    """Least-squares non-decreasing fit via pool-adjacent-violators (equal weights)."""
    vals = []
    wts = []
    for v in np.asarray(y, dtype=float):
        vals.append(float(v))
        wts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2 = vals.pop(), wts.pop()
            v1, w1 = vals.pop(), wts.pop()
            vals.append((v1 * w1 + v2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
    out = np.empty(len(np.asarray(y)))
    i = 0
    for v, w in zip(vals, wts):
        out[i:i + w] = v
        i += w
    return out


@dataclass(frozen=True, eq=False)
class SuccessProbTable:
    """Monte Carlo success probabilities plus the channel statistics behind them.

    theta[n, k, m]: P(SINR >= threshold_m) for device n through RIS k;
    theta_direct[n, m]: same for the direct link. The raw estimates are kept
    next to the isotonic-repaired ones that the simulator consumes. los_sum,
    nlos_var and the shadowing parameters let per-slot samplers redraw the
    exact same channels without touching element-level geometry again.
    """

    theta: np.ndarray
    theta_raw: np.ndarray
    theta_direct: np.ndarray
    theta_direct_raw: np.ndarray
    rates: np.ndarray
    los_sum: np.ndarray      # (N, K) complex
    nlos_var: np.ndarray     # (N, K)
    shadow_mu: np.ndarray    # (N,)
    shadow_sigma: float
    trials: int
    physics_hash: str

    @property
    def n_devices(self):
        return self.theta.shape[0]

    @property
    def n_ris(self):
        return self.theta.shape[1]

    @property
    def n_sf(self):
        return self.theta.shape[2]

    @property
    def mu(self):
        """Expected throughput (bits/s) per (device, RIS, SF)."""
        return self.theta * self.rates[None, None, :]

    @property
    def mu_direct(self):
        return self.theta_direct * self.rates[None, :]

    def save(self, path):
        np.savez_compressed(
            path,
            theta=self.theta, theta_raw=self.theta_raw,
            theta_direct=self.theta_direct, theta_direct_raw=self.theta_direct_raw,
            rates=self.rates, los_sum=self.los_sum, nlos_var=self.nlos_var,
            shadow_mu=self.shadow_mu, shadow_sigma=self.shadow_sigma,
            trials=self.trials, physics_hash=self.physics_hash,
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            return cls(
                theta=z["theta"], theta_raw=z["theta_raw"],
                theta_direct=z["theta_direct"], theta_direct_raw=z["theta_direct_raw"],
                rates=z["rates"], los_sum=z["los_sum"], nlos_var=z["nlos_var"],
                shadow_mu=z["shadow_mu"], shadow_sigma=float(z["shadow_sigma"]),
                trials=int(z["trials"]), physics_hash=str(z["physics_hash"]),
            )


def estimate_success_probs(scenario, trials=100_000, rng=None):
    """Monte Carlo estimate of every arm's success probability.

    One batch of channel draws per (device, link) is shared across all SF
    thresholds, so each raw row is monotone by construction; the isotonic
    repair is still applied before use. Uses the collapsed reflected-gain
    statistics, which are distribution-exact for the per-element model.
    """
    from .scenario import scenario_physics_hash

    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    devices = scenario.devices
    if not devices:
        raise ValueError("scenario has no concrete device positions")
    N, K, M = len(devices), scenario.n_ris, scenario.n_sf
    radio = scenario.radio
    thresholds = np.asarray(scenario.sf_table.thresholds, dtype=float)
    phases = phase_matrices(scenario)

    los_sum = np.zeros((N, K), dtype=complex)
    nlos_var = np.zeros((N, K))
    theta_raw = np.zeros((N, K, M))
    for n, dev in enumerate(devices):
        for k, geom in enumerate(scenario.riss):
            S, var = ris_gain_stats(geom, phases[k], dev, scenario.bs, radio)
            los_sum[n, k] = S
            nlos_var[n, k] = var
            g = (rng.standard_normal(trials) + 1j * rng.standard_normal(trials)) * SQRT_HALF
            sinr = received_sinr(S + math.sqrt(var) * g, radio)
            theta_raw[n, k] = np.mean(sinr[:, None] >= thresholds[None, :], axis=0)

    shadow_mu = np.array([direct_shadow_mu(d, scenario.bs, radio) for d in devices])
    theta_direct_raw = np.zeros((N, M))
    for n in range(N):
        rho = np.exp(shadow_mu[n] + radio.shadow_sigma * rng.standard_normal(trials))
        gsq = 0.5 * (rng.standard_normal(trials) ** 2 + rng.standard_normal(trials) ** 2)
        sinr = radio.tx_power * rho * gsq / radio.interference_plus_noise
        theta_direct_raw[n] = np.mean(sinr[:, None] >= thresholds[None, :], axis=0)

    theta = np.stack([
        np.stack([isotonic_non_decreasing(theta_raw[n, k]) for k in range(K)])
        for n in range(N)
    ])
    theta_direct = np.stack([isotonic_non_decreasing(r) for r in theta_direct_raw])
    return SuccessProbTable(
        theta=theta, theta_raw=theta_raw,
        theta_direct=theta_direct, theta_direct_raw=theta_direct_raw,
        rates=np.asarray(scenario.sf_table.rates, dtype=float),
        los_sum=los_sum, nlos_var=nlos_var,
        shadow_mu=shadow_mu, shadow_sigma=radio.shadow_sigma,
        trials=int(trials), physics_hash=scenario_physics_hash(scenario),
    )
