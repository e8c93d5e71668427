"""Scenario configuration, unit conversions, node placement and RNG streams."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


class ConfigError(ValueError):
    """Raised when a scenario document fails to parse or violates an invariant."""


def dbm_to_watts(x_dbm: float) -> float:
    """Convert a dBm power level to watts."""
    if not np.isfinite(x_dbm):
        raise ConfigError(f"non-finite dBm value: {x_dbm!r}")
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def dbi_to_linear(x_dbi: float) -> float:
    """Convert an antenna gain in dBi to a linear power gain."""
    return 10.0 ** (x_dbi / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """All simulation parameters: power budgets, geometry, frame constants, seed.

    Defaults reproduce the standard operating point of the simulator; any
    field can be overridden through a flat key=value config file.
    """

    p_tbs_dbm: float = 34.0       # coastal station transmit budget
    p_uav_dbm: float = 30.0       # UAV transmit budget
    n0_dbm: float = -107.0        # noise power per subcarrier
    v_max: float = 30.0           # m/s
    k_tu: float = 30.0            # Rician factor of the fronthaul links
    rcs_m2: float = 100.0         # radar cross-section per target
    fc_hz: float = 5.0e9
    bw_hz: float = 10.0e6
    m_subcarriers: int = 32
    u_users: int = 8
    j_targets: int = 4
    n_frames: int = 500
    n_slots: int = 10
    slot_duration_s: float = 0.1  # so 500 frames x 10 slots x 0.1 s = 500 s
    gain_tbs_tx_dbi: float = 30.0
    gain_tbs_rx_dbi: float = 26.0
    gain_uav_tx_dbi: float = 24.0
    gain_uav_rx_dbi: float = 20.0
    gain_ue_rx_dbi: float = 2.0
    sic_db: float = -110.0        # residual self-interference after cancellation
    r_dl_min: float = 10.0        # bit/s/Hz per user
    r_mi_min: float = 1.0         # bit/s/Hz per target
    tbs_pos: tuple[float, float, float] = (0.0, 0.0, 10.0)
    uav_takeoff_pos: tuple[float, float, float] = (10.0, 0.0, 200.0)
    area_center: tuple[float, float, float] = (1.0e4, 1.0e4, 0.0)
    area_radius_m: float = 100.0
    uav_alt_m: float = 200.0
    upa_uav_tx: tuple[int, int] = (6, 6)
    upa_uav_rx: tuple[int, int] = (6, 6)
    upa_tbs_tx: tuple[int, int] = (8, 8)
    upa_tbs_rx: tuple[int, int] = (8, 8)
    seed: int = 0

    def __post_init__(self):
        _validate(self)

    # ---- derived quantities -------------------------------------------------

    @property
    def p_tbs_w(self) -> float:
        return dbm_to_watts(self.p_tbs_dbm)

    @property
    def p_uav_w(self) -> float:
        return dbm_to_watts(self.p_uav_dbm)

    @property
    def n0_w(self) -> float:
        return dbm_to_watts(self.n0_dbm)

    @property
    def xi_sic(self) -> float:
        return dbi_to_linear(self.sic_db)

    @property
    def r_tx(self) -> int:
        return self.upa_uav_tx[0] * self.upa_uav_tx[1]

    @property
    def r_rx(self) -> int:
        return self.upa_uav_rx[0] * self.upa_uav_rx[1]

    @property
    def r_tx_bar(self) -> int:
        return self.upa_tbs_tx[0] * self.upa_tbs_tx[1]

    @property
    def r_rx_bar(self) -> int:
        return self.upa_tbs_rx[0] * self.upa_tbs_rx[1]

    @property
    def frame_duration_s(self) -> float:
        return self.n_slots * self.slot_duration_s

    @property
    def max_step_m(self) -> float:
        """Maximum UAV displacement between consecutive frames."""
        return self.v_max * self.frame_duration_s

    def subcarrier_frequency(self, m: int) -> float:
        """Center frequency of subcarrier m (0-based), symmetric about fc."""
        return self.fc_hz + (m + 0.5 - self.m_subcarriers / 2) * self.bw_hz / self.m_subcarriers

    def wavelength(self, m: int) -> float:
        return SPEED_OF_LIGHT / self.subcarrier_frequency(m)

    def replace(self, **overrides) -> "ScenarioConfig":
        return replace(self, **overrides)


_VEC3_KEYS = {"tbs_pos", "uav_takeoff_pos", "area_center"}
_PAIR_KEYS = {"upa_uav_tx", "upa_uav_rx", "upa_tbs_tx", "upa_tbs_rx"}
_INT_KEYS = {"m_subcarriers", "u_users", "j_targets", "n_frames", "n_slots", "seed"}


def _validate(cfg: ScenarioConfig) -> None:
    if cfg.m_subcarriers % 4 != 0:
        raise ConfigError(
            f"m_subcarriers: M must be divisible by 4, got {cfg.m_subcarriers}"
        )
    for key in ("p_tbs_dbm", "p_uav_dbm", "n0_dbm", "gain_tbs_tx_dbi", "gain_tbs_rx_dbi",
                "gain_uav_tx_dbi", "gain_uav_rx_dbi", "gain_ue_rx_dbi", "sic_db"):
        if not np.isfinite(getattr(cfg, key)):
            raise ConfigError(f"{key}: must be finite")
    if cfg.v_max <= 0:
        raise ConfigError(f"v_max: must be positive, got {cfg.v_max}")
    for key in ("u_users", "j_targets", "n_frames", "n_slots", "m_subcarriers"):
        if getattr(cfg, key) < 1:
            raise ConfigError(f"{key}: must be >= 1")
    if cfg.n_slots < 4:
        raise ConfigError(
            f"n_slots: need >= 4 slots so all frame prefactors stay positive, got {cfg.n_slots}"
        )
    if cfg.area_radius_m <= 0:
        raise ConfigError(f"area_radius_m: must be positive, got {cfg.area_radius_m}")
    if cfg.slot_duration_s <= 0:
        raise ConfigError(f"slot_duration_s: must be positive, got {cfg.slot_duration_s}")
    for key in ("fc_hz", "bw_hz", "k_tu", "rcs_m2"):
        val = getattr(cfg, key)
        if not np.isfinite(val) or val < 0:
            raise ConfigError(f"{key}: must be finite and nonnegative, got {val}")
    for key in _PAIR_KEYS:
        dims = getattr(cfg, key)
        if len(dims) != 2 or dims[0] < 1 or dims[1] < 1:
            raise ConfigError(f"{key}: UPA shape must be two positive integers, got {dims}")


def _parse_scalar(key: str, text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"{key}: unterminated list literal {text!r}")
        items = [t for t in text[1:-1].replace(",", " ").split() if t]
        return tuple(float(t) for t in items)
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse value {text!r}") from exc


def parse_config_text(text: str) -> ScenarioConfig:
    """Parse a flat key = value document into a validated ScenarioConfig.

    Unknown keys are rejected; missing keys keep their defaults. Lists use
    bracket syntax, e.g. ``tbs_pos = [0, 0, 10]``. Lines starting with ``#``
    are comments.
    """
    known = {f.name for f in fields(ScenarioConfig)}
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parsed = _parse_scalar(key, value)
        if key in _VEC3_KEYS:
            if not isinstance(parsed, tuple) or len(parsed) != 3:
                raise ConfigError(f"{key}: expected a 3-element list")
        elif key in _PAIR_KEYS:
            if not isinstance(parsed, tuple) or len(parsed) != 2:
                raise ConfigError(f"{key}: expected a 2-element list")
            parsed = (int(parsed[0]), int(parsed[1]))
        elif key in _INT_KEYS:
            parsed = int(parsed)
        overrides[key] = parsed
    return ScenarioConfig(**overrides)


def load_config(path: str | Path | None, seed: int | None = None) -> ScenarioConfig:
    """Load a config file (None = all defaults), optionally overriding the seed."""
    if path is None:
        cfg = ScenarioConfig()
    else:
        cfg = parse_config_text(Path(path).read_text())
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    return cfg


@dataclass(frozen=True)
class NodeLayout:
    """Static positions of the served ships (users) and the sensed targets."""

    users: np.ndarray   # (U, 3), z = 0
    targets: np.ndarray  # (J, 3), z = 0

    def __post_init__(self):
        object.__setattr__(self, "users", np.asarray(self.users, dtype=float))
        object.__setattr__(self, "targets", np.asarray(self.targets, dtype=float))


def _uniform_disk(rng: np.random.Generator, center, radius: float, count: int) -> np.ndarray:
    # radius = R*sqrt(u) keeps the density uniform over the disk area
    r = radius * np.sqrt(rng.uniform(size=count))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=count)
    pts = np.zeros((count, 3))
    pts[:, 0] = center[0] + r * np.cos(phi)
    pts[:, 1] = center[1] + r * np.sin(phi)
    return pts


def place_nodes(cfg: ScenarioConfig, rng: np.random.Generator) -> NodeLayout:
    """Sample users then targets uniformly over the emergency-area disk."""
    users = _uniform_disk(rng, cfg.area_center, cfg.area_radius_m, cfg.u_users)
    targets = _uniform_disk(rng, cfg.area_center, cfg.area_radius_m, cfg.j_targets)
    return NodeLayout(users=users, targets=targets)


# ---- deterministic stream derivation ----------------------------------------
#
# Every random draw in the simulator hangs off the single config seed through
# fixed-purpose spawn keys, so runs are reproducible and individual frames can
# be regenerated in isolation.

_NODES_KEY = 1
_FRAME_KEY = 2
_SCHEME_KEY = 3


def node_stream(cfg: ScenarioConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, _NODES_KEY)))


def frame_stream(cfg: ScenarioConfig, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, _FRAME_KEY, frame)))


def scheme_stream(cfg: ScenarioConfig, tag: int) -> np.random.Generator:
    """Scheme-local stream (e.g. random subcarrier draws) independent of channels."""
    return np.random.default_rng(np.random.SeedSequence((cfg.seed, _SCHEME_KEY, tag)))


def make_layout(cfg: ScenarioConfig) -> NodeLayout:
    return place_nodes(cfg, node_stream(cfg))
