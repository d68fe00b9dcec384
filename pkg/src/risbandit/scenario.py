"""Scenario description: network layout, radio constants, SF table, hyperparameters.

Scenario files use TOML syntax (conventionally with a .scenario extension).
Positions are given in meters, powers in dBm, frequencies in GHz/MHz and the
shadow-fading spread in dB; everything is converted to linear SI units at
parse time and all internal computation stays in SI.
"""
import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .channel import data_rate
from .geometry import Position3D, RisGeometry, compute_element_positions, oriented_ris

SPEED_OF_LIGHT = 299_792_458.0

LN10_OVER_10 = math.log(10.0) / 10.0


def dbm_to_watt(dbm):
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_natlog(db):
    """Convert a dB-valued log-normal spread to the sigma of ln(x)."""
    return db * LN10_OVER_10


@dataclass(frozen=True)
class SfTable:
    """Spreading factors with their data rates (bits/s) and SINR thresholds (linear)."""

    sfs: tuple
    rates: tuple
    thresholds: tuple

    @classmethod
    def from_bandwidth(cls, sfs, thresholds, bandwidth, code_rate):
        rates = tuple(data_rate(s, bandwidth, code_rate) for s in sfs)
        return cls(tuple(sfs), rates, tuple(thresholds))

    def __len__(self):
        return len(self.sfs)


@dataclass(frozen=True)
class RadioConstants:
    """Physical-layer constants shared by every link in a scenario.

    shadow_mu is the nat-log mean of the direct-channel power gain; None means
    "anchor the mean power to the NLoS path loss at each device's BS distance",
    which keeps the direct path comparable to the reflected one.
    """

    tx_power: float            # watts
    noise_power: float         # watts, sigma_w^2
    interference_mu: float     # nat-log mean of the log-normal interference
    interference_sigma: float  # nat-log std
    carrier_freq: float        # Hz
    bandwidth: float           # Hz
    code_rate: float = 0.5
    rician_factor: float = 4.0
    antenna_gain: float = 1.0
    pathloss_exp: float = 3.9
    reflection_amplitude: float = 1.0
    pin_bits: int = 8
    shadow_mu: float | None = None
    shadow_sigma: float = db_to_natlog(8.0)

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def interference_plus_noise(self):
        """Deterministic SINR denominator: E[y^2] + sigma_w^2."""
        return math.exp(2.0 * self.interference_mu + 2.0 * self.interference_sigma ** 2) + self.noise_power

    @classmethod
    def with_total_denominator(cls, total_watt, interference_sigma=0.5, **kw):
        """Split a combined noise-plus-interference power between the two terms.

        Only the total enters any computation; the split is an even one so both
        fields stay physically plausible: sigma_w^2 = total/2 and mu_y chosen so
        E[y^2] = exp(2 mu_y + 2 sigma_y^2) = total/2.
        """
        half = total_watt / 2.0
        mu_y = (math.log(half) - 2.0 * interference_sigma ** 2) / 2.0
        return cls(noise_power=half, interference_mu=mu_y,
                   interference_sigma=interference_sigma, **kw)


@dataclass(frozen=True)
class AlgoParams:
    """Learning hyperparameters carried alongside the physical scenario."""

    epochs: int = 10
    nu1: int = 1000
    nu2: int = 1000
    nu3: int = 100
    delta: float = 0.0
    game_epsilon: float = 0.01
    game_nu: float = 1.4
    qlearn_lr: float = 0.1
    qlearn_discount: float = 0.9
    qlearn_eps_start: float = 0.1
    qlearn_eps_final: float = 0.01
    kmeans_iter_cap: int = 100
    kmeans_tol: float = 1e-6


def parse_phase_mode(mode):
    """Normalize a phase-shift mode string to ('optimal', None) or ('constant', rho)."""
    if mode == "optimal":
        return ("optimal", None)
    if isinstance(mode, str) and mode.startswith("constant:"):
        rho = int(mode.split(":", 1)[1])
        return ("constant", rho)
    raise ValueError(f"unknown phase shift mode {mode!r}; use 'optimal' or 'constant:<rho>'")


@dataclass(frozen=True)
class Scenario:
    """Immutable description of one network: geometry, radio constants, hyperparameters."""

    bs: Position3D
    ues: tuple                    # Position3D of cellular users (centroid drives phase design)
    devices: tuple                # Position3D of IoT devices; may be empty in random mode
    riss: tuple                   # RisGeometry
    sf_table: SfTable
    radio: RadioConstants
    ris_active_prob: tuple        # one P_a per RIS
    phase_shift_mode: str = "optimal"
    algo: AlgoParams = field(default_factory=AlgoParams)
    device_disc_center: tuple = (150.0, 150.0)
    device_disc_diameter: float = 45.0
    min_device_distance: float = 5.0
    device_height: float = 1.5
    random_devices: int = 0       # >0: resample this many device positions per trial

    @property
    def n_devices(self):
        return len(self.devices) if self.devices else self.random_devices

    @property
    def n_ris(self):
        return len(self.riss)

    @property
    def n_sf(self):
        return len(self.sf_table)

    @property
    def ue_centroid(self):
        xs = [u.x for u in self.ues]
        ys = [u.y for u in self.ues]
        zs = [u.z for u in self.ues]
        return Position3D(sum(xs) / len(xs), sum(ys) / len(ys), sum(zs) / len(zs))

    def with_devices(self, devices):
        return replace(self, devices=tuple(devices), random_devices=0)


def sample_device_positions(scenario, rng):
    """Uniform positions in the device disc with the minimum pairwise spacing."""
    n = scenario.random_devices
    cx, cy = scenario.device_disc_center
    radius = scenario.device_disc_diameter / 2.0
    dmin = scenario.min_device_distance
    placed = []
    attempts = 0
    while len(placed) < n:
        attempts += 1
        if attempts > 10000 * n:
            raise RuntimeError("could not place devices with the requested spacing")
        r = radius * math.sqrt(rng.random())
        ang = 2.0 * math.pi * rng.random()
        p = (cx + r * math.cos(ang), cy + r * math.sin(ang))
        if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= dmin for q in placed):
            placed.append(p)
    return tuple(Position3D(x, y, scenario.device_height) for x, y in placed)


def validate_scenario(s):
    """Return a list of human-readable violations; empty means the scenario is sound."""
    bad = []

    def finite_pos(p, path):
        if not all(math.isfinite(v) for v in (p.x, p.y, p.z)):
            bad.append(f"{path}: coordinates must be finite")
        elif p.z < 0:
            bad.append(f"{path}: height must be >= 0")

    finite_pos(s.bs, "bs")
    for i, u in enumerate(s.ues):
        finite_pos(u, f"ues[{i}]")
    for i, d in enumerate(s.devices):
        finite_pos(d, f"devices[{i}]")
    if s.n_devices < 1:
        bad.append("devices: need at least one device (or random_devices > 0)")
    if s.n_ris < 1:
        bad.append("riss: need at least one RIS")
    for i, g in enumerate(s.riss):
        finite_pos(g.center, f"riss[{i}].center")
        if g.rows < 1 or g.cols < 1:
            bad.append(f"riss[{i}]: rows and cols must be >= 1")
        else:
            stored = np.asarray(g.element_positions)
            if stored.shape != (g.rows, g.cols, 3):
                bad.append(f"riss[{i}].element_positions: wrong shape {stored.shape}")
            elif not np.array_equal(stored, compute_element_positions(g)):
                bad.append(f"riss[{i}].element_positions: grid does not match center/spacing/angle")
    if len(s.ris_active_prob) != s.n_ris:
        bad.append("ris_active_prob: need one probability per RIS")
    for i, p in enumerate(s.ris_active_prob):
        if not 0.0 <= p <= 1.0:
            bad.append(f"ris_active_prob[{i}]: {p} outside [0, 1]")

    t = s.sf_table
    if not (len(t.sfs) == len(t.rates) == len(t.thresholds)):
        bad.append("sf_table: sfs, rates, thresholds must have equal length")
    else:
        if any(a >= b for a, b in zip(t.sfs, t.sfs[1:])):
            bad.append("sf_table.sfs: must be strictly ascending")
        if any(a <= b for a, b in zip(t.rates, t.rates[1:])):
            bad.append("sf_table.rates: must be strictly descending")
        if any(a <= b for a, b in zip(t.thresholds, t.thresholds[1:])):
            bad.append("sf_table.thresholds: must be strictly descending")

    r = s.radio
    for name in ("tx_power", "noise_power", "carrier_freq", "bandwidth"):
        if getattr(r, name) <= 0:
            bad.append(f"radio.{name}: must be > 0")
    if not 0.0 < r.reflection_amplitude <= 1.0:
        bad.append("radio.reflection_amplitude: must be in (0, 1]")
    if r.pin_bits < 1:
        bad.append("radio.pin_bits: must be >= 1")
    if r.rician_factor < 0:
        bad.append("radio.rician_factor: must be >= 0")

    try:
        parse_phase_mode(s.phase_shift_mode)
    except ValueError as e:
        bad.append(f"phase_shift_mode: {e}")

    for i in range(len(s.devices)):
        for j in range(i + 1, len(s.devices)):
            d = s.devices[i].distance_to(s.devices[j])
            if d < s.min_device_distance:
                bad.append(
                    f"devices[{i}]/devices[{j}]: {d:.2f} m apart, below the "
                    f"{s.min_device_distance} m minimum"
                )
    return bad


def load_scenario(path):
    """Parse a TOML .scenario file into a Scenario (units converted to SI)."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)

    bs = Position3D(*raw["bs"]["position"])
    ues = tuple(Position3D(*u) for u in raw["ues"]["positions"])
    centroid_xy = [sum(u.x for u in ues) / len(ues), sum(u.y for u in ues) / len(ues)]
    centroid = Position3D(centroid_xy[0], centroid_xy[1], ues[0].z)

    rad = raw["radio"]
    radio = RadioConstants.with_total_denominator(
        dbm_to_watt(rad["noise_plus_interference_dbm"]),
        interference_sigma=rad.get("interference_sigma", 0.5),
        tx_power=dbm_to_watt(rad["tx_power_dbm"]),
        carrier_freq=rad["carrier_freq_ghz"] * 1e9,
        bandwidth=rad["bandwidth_mhz"] * 1e6,
        code_rate=rad.get("code_rate", 0.5),
        rician_factor=rad.get("rician_factor", 4.0),
        antenna_gain=rad.get("antenna_gain", 1.0),
        pathloss_exp=rad.get("pathloss_exp", 3.9),
        reflection_amplitude=rad.get("reflection_amplitude", 1.0),
        pin_bits=rad.get("pin_bits", 8),
        shadow_mu=(db_to_natlog(rad["shadow_mu_db"]) if "shadow_mu_db" in rad else None),
        shadow_sigma=db_to_natlog(rad.get("shadow_sigma_db", 8.0)),
    )

    sf = raw["sf"]
    sf_table = SfTable.from_bandwidth(sf["sfs"], sf["thresholds"],
                                      radio.bandwidth, radio.code_rate)

    riss = tuple(
        oriented_ris(
            Position3D(*r["center"]), bs, centroid,
            rows=r.get("rows", 101), cols=r.get("cols", 101),
            element_spacing_v=r.get("spacing_v", 0.01),
            element_spacing_h=r.get("spacing_h", 0.01),
        )
        for r in raw["ris"]
    )

    occ = raw.get("occupancy", {})
    pa = occ.get("ris_active_prob", 0.2)
    if isinstance(pa, (int, float)):
        pa = [float(pa)] * len(riss)
    if len(pa) != len(riss):
        raise ValueError("occupancy.ris_active_prob: need a scalar or one value per RIS")

    area = raw.get("area", {})
    dev_section = raw.get("devices", {})
    height = dev_section.get("height", 1.5)
    fixed = dev_section.get("positions", [])
    devices = tuple(
        Position3D(p[0], p[1], p[2] if len(p) > 2 else height) for p in fixed
    )
    random_devices = int(dev_section.get("random_count", 0))
    if not devices and not random_devices:
        raise ValueError("devices: give positions or a random_count")

    algo_raw = raw.get("algo", {})
    algo = AlgoParams(**{k: algo_raw[k] for k in algo_raw})

    scenario = Scenario(
        bs=bs,
        ues=ues,
        devices=devices,
        riss=riss,
        sf_table=sf_table,
        radio=radio,
        ris_active_prob=tuple(float(p) for p in pa),
        phase_shift_mode=raw.get("phase", {}).get("mode", "optimal"),
        algo=algo,
        device_disc_center=tuple(area.get("device_disc_center", centroid_xy)),
        device_disc_diameter=area.get("device_disc_diameter", 45.0),
        min_device_distance=area.get("min_device_distance", 5.0),
        device_height=height,
        random_devices=random_devices,
    )
    problems = validate_scenario(scenario)
    if problems:
        raise ValueError("invalid scenario: " + "; ".join(problems))
    return scenario


def scenario_physics_hash(s):
    """Hash of everything that affects channel statistics (not the learning knobs).

    Keys oracle caches: same hash + same trial count means the cached success
    probabilities are reusable.
    """
    def pos(p):
        return [p.x, p.y, p.z]

    doc = {
        "version": 1,
        "bs": pos(s.bs),
        "ues": [pos(u) for u in s.ues],
        "devices": [pos(d) for d in s.devices],
        "riss": [
            {
                "center": pos(g.center),
                "rows": g.rows,
                "cols": g.cols,
                "dv": g.element_spacing_v,
                "dh": g.element_spacing_h,
                "phi": g.orientation_angle,
            }
            for g in s.riss
        ],
        "sf": {"sfs": list(s.sf_table.sfs), "rates": list(s.sf_table.rates),
               "thresholds": list(s.sf_table.thresholds)},
        "radio": {
            "tx": s.radio.tx_power, "noise": s.radio.noise_power,
            "imu": s.radio.interference_mu, "isig": s.radio.interference_sigma,
            "fc": s.radio.carrier_freq, "bw": s.radio.bandwidth,
            "cr": s.radio.code_rate, "zeta": s.radio.rician_factor,
            "gain": s.radio.antenna_gain, "iota": s.radio.pathloss_exp,
            "amp": s.radio.reflection_amplitude, "bits": s.radio.pin_bits,
            "smu": s.radio.shadow_mu, "ssig": s.radio.shadow_sigma,
        },
        "phase_mode": s.phase_shift_mode,
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def builtin_scenario_path(name):
    """Path of a scenario file shipped with the package (e.g. 'fig3')."""
    from importlib.resources import files

    fname = name if name.endswith(".scenario") else name + ".scenario"
    return str(files("risbandit").joinpath("scenarios", fname))
