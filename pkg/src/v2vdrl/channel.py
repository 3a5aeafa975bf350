"""Large-scale and fast-fading channel gains for V2I and V2V paths.

All gains are linear power ratios. Large-scale terms (pathloss, shadowing,
antenna gains) are drawn once per episode; fast fading is redrawn every slot.

Array conventions, with M CUEs, K V2V links and N sub-bands:

    cue_bs   (M,)      CUE m -> base station
    v2v_bs   (K,)      V2V transmitter k -> base station
    cue_v2v  (M, K)    CUE m -> V2V receiver k
    v2v_v2v  (K, K)    V2V transmitter j -> V2V receiver k

Fast fading adds a trailing sub-band axis of length N to each of these.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
PATH_KEYS = ("cue_bs", "v2v_bs", "cue_v2v", "v2v_v2v")


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    carrier_ghz: float = 2.0
    bs_height_m: float = 25.0
    bs_antenna_gain_dbi: float = 8.0
    vehicle_height_m: float = 1.5
    vehicle_antenna_gain_dbi: float = 3.0
    v2i_shadow_std_db: float = 8.0
    v2v_shadow_std_db: float = 3.0
    v2i_pl_intercept_db: float = 128.1
    v2i_pl_slope_db: float = 37.6
    v2v_pl_intercept_db: float = 38.77
    v2v_pl_slope_db: float = 16.7
    v2v_pl_freq_coeff_db: float = 18.2
    nlos_corner_penalty_db: float = 12.5
    min_distance_m: float = 1.0


DEFAULT_CHANNEL = ChannelConfig()


def db_to_linear(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def linear_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_watts(p_dbm):
    return np.power(10.0, (np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(p_w):
    return 10.0 * np.log10(p_w) + 30.0


def _check_distance(distance):
    d = np.asarray(distance, dtype=float)
    if np.any(~(d > 0)):
        raise ChannelError("distance must be positive")
    return d


def free_space_loss_db(distance, carrier_ghz: float = 2.0):
    d = _check_distance(distance)
    return 20.0 * np.log10(4.0 * np.pi * d * carrier_ghz * 1e9 / SPEED_OF_LIGHT)


def pathloss_v2i(distance, cfg: ChannelConfig = DEFAULT_CHANNEL):
    """Macro-cell pathloss in dB, ``distance`` in meters.

    Never drops below the free-space loss at 1 m.
    """
    d = _check_distance(distance)
    pl = cfg.v2i_pl_intercept_db + cfg.v2i_pl_slope_db * np.log10(d / 1000.0)
    pl = np.maximum(pl, free_space_loss_db(1.0, cfg.carrier_ghz))
    return pl if pl.ndim else float(pl)


def pathloss_v2v(distance, los, corner_distance=None, cfg: ChannelConfig = DEFAULT_CHANNEL):
    """Vehicle-to-vehicle pathloss in dB.

    LOS links use the straight-line distance. NLOS links are evaluated on the
    around-the-corner path (``corner_distance``, the L1 distance; defaults to
    ``distance``) and pay ``cfg.nlos_corner_penalty_db`` on top.
    """
    d = _check_distance(distance)
    los = np.asarray(los, dtype=bool)
    path = d if corner_distance is None else np.maximum(_check_distance(corner_distance), d)

    def los_loss(x):
        return (cfg.v2v_pl_intercept_db + cfg.v2v_pl_slope_db * np.log10(x)
                + cfg.v2v_pl_freq_coeff_db * np.log10(cfg.carrier_ghz))

    pl = np.where(los, los_loss(d), los_loss(path) + cfg.nlos_corner_penalty_db)
    return pl if pl.ndim else float(pl)


def sample_shadowing(link_class: str, rng, size=None, cfg: ChannelConfig = DEFAULT_CHANNEL):
    """Zero-mean log-normal shadowing in dB for ``link_class`` 'V2I' or 'V2V'."""
    if link_class == "V2I":
        sigma = cfg.v2i_shadow_std_db
    elif link_class == "V2V":
        sigma = cfg.v2v_shadow_std_db
    else:
        raise ChannelError(f"unknown link class {link_class!r}")
    if sigma == 0:
        return np.zeros(size) if size is not None else 0.0
    return rng.normal(0.0, sigma, size=size)


@dataclass(frozen=True)
class PathSet:
    pathloss_db: np.ndarray
    shadowing_db: np.ndarray
    antenna_gain_db: np.ndarray

    @property
    def gain_db(self) -> np.ndarray:
        return self.antenna_gain_db - self.pathloss_db - self.shadowing_db


@dataclass(frozen=True)
class LargeScaleState:
    cue_bs: PathSet
    v2v_bs: PathSet
    cue_v2v: PathSet
    v2v_v2v: PathSet

    @property
    def n_cue(self) -> int:
        return self.cue_bs.pathloss_db.shape[0]

    @property
    def n_v2v(self) -> int:
        return self.v2v_bs.pathloss_db.shape[0]

    def equals(self, other: LargeScaleState) -> bool:
        return all(
            np.array_equal(getattr(getattr(self, k), f.name), getattr(getattr(other, k), f.name))
            for k in PATH_KEYS for f in fields(PathSet)
        )


@dataclass(frozen=True)
class FastFadingSample:
    cue_bs: np.ndarray
    v2v_bs: np.ndarray
    cue_v2v: np.ndarray
    v2v_v2v: np.ndarray


@dataclass(frozen=True)
class LinkGainMatrix:
    """Linear power gains per sub-band.

    ``h[m, b]``: CUE m to BS; ``g[k, b]``: own V2V link; ``htilde[k, b]``:
    V2V transmitter k to BS; ``cue_to_v2v[m, k, b]``; ``v2v_to_v2v[j, k, b]``
    from transmitter j to receiver k (the diagonal equals ``g``).
    """

    h: np.ndarray
    g: np.ndarray
    htilde: np.ndarray
    cue_to_v2v: np.ndarray
    v2v_to_v2v: np.ndarray

    @property
    def n_rb(self) -> int:
        return self.h.shape[1]


def _pair_distances(a, b):
    dx = np.abs(a[:, None, 0] - b[None, :, 0])
    dy = np.abs(a[:, None, 1] - b[None, :, 1])
    return np.hypot(dx, dy), dx + dy


def large_scale_state(cue_pos, tx_pos, rx_pos, cue_street, tx_street, rx_street,
                      bs_pos, rng, cfg: ChannelConfig = DEFAULT_CHANNEL) -> LargeScaleState:
    """Draw pathloss, shadowing and antenna gains for every path.

    ``*_street`` are corridor ids; two vehicles are in LOS iff their ids match.
    """
    cue_pos = np.asarray(cue_pos, dtype=float).reshape(-1, 2)
    tx_pos = np.asarray(tx_pos, dtype=float).reshape(-1, 2)
    rx_pos = np.asarray(rx_pos, dtype=float).reshape(-1, 2)
    if len(tx_pos) != len(rx_pos) or len(tx_street) != len(tx_pos) or len(rx_street) != len(rx_pos):
        raise ChannelError("transmitter and receiver sets differ in size")
    bs = np.asarray(bs_pos, dtype=float).reshape(1, 2)
    dh = cfg.bs_height_m - cfg.vehicle_height_m

    def to_bs(pos):
        d2d = np.hypot(pos[:, 0] - bs[0, 0], pos[:, 1] - bs[0, 1])
        d = np.sqrt(d2d ** 2 + dh ** 2)
        pl = np.asarray(pathloss_v2i(d, cfg), dtype=float).reshape(len(pos))
        sh = np.asarray(sample_shadowing("V2I", rng, size=len(pos), cfg=cfg), dtype=float)
        ant = np.full(len(pos), cfg.bs_antenna_gain_dbi + cfg.vehicle_antenna_gain_dbi)
        return PathSet(pl, sh, ant)

    def vehicle_paths(src, dst, src_street, dst_street):
        d, l1 = _pair_distances(src, dst)
        d = np.maximum(d, cfg.min_distance_m)
        l1 = np.maximum(l1, cfg.min_distance_m)
        los = np.asarray(src_street)[:, None] == np.asarray(dst_street)[None, :]
        pl = np.asarray(pathloss_v2v(d, los, l1, cfg), dtype=float).reshape(d.shape)
        sh = np.asarray(sample_shadowing("V2V", rng, size=d.shape, cfg=cfg), dtype=float)
        ant = np.full(d.shape, 2.0 * cfg.vehicle_antenna_gain_dbi)
        return PathSet(pl, sh, ant)

    return LargeScaleState(
        cue_bs=to_bs(cue_pos),
        v2v_bs=to_bs(tx_pos),
        cue_v2v=vehicle_paths(cue_pos, rx_pos, cue_street, rx_street),
        v2v_v2v=vehicle_paths(tx_pos, rx_pos, tx_street, rx_street),
    )


def sample_fast_fading(n_cue: int, n_v2v: int, n_rb: int, rng) -> FastFadingSample:
    """Unit-mean exponential power gains (Rayleigh amplitude), i.i.d. per path and sub-band."""
    return FastFadingSample(
        cue_bs=rng.exponential(1.0, size=(n_cue, n_rb)),
        v2v_bs=rng.exponential(1.0, size=(n_v2v, n_rb)),
        cue_v2v=rng.exponential(1.0, size=(n_cue, n_v2v, n_rb)),
        v2v_v2v=rng.exponential(1.0, size=(n_v2v, n_v2v, n_rb)),
    )


def unit_fading(n_cue: int, n_v2v: int, n_rb: int) -> FastFadingSample:
    """Fading fixed at its mean; gives the large-scale-only gain matrix."""
    return FastFadingSample(
        np.ones((n_cue, n_rb)), np.ones((n_v2v, n_rb)),
        np.ones((n_cue, n_v2v, n_rb)), np.ones((n_v2v, n_v2v, n_rb)),
    )


def assemble_gains(large: LargeScaleState, fading: FastFadingSample) -> LinkGainMatrix:
    linear = {}
    for key in PATH_KEYS:
        base = db_to_linear(getattr(large, key).gain_db)
        fad = np.asarray(getattr(fading, key), dtype=float)
        if fad.shape[:-1] != base.shape:
            raise ChannelError(f"{key}: fading shape {fad.shape} does not match links {base.shape}")
        linear[key] = base[..., None] * fad
    v2v = linear["v2v_v2v"]
    k = v2v.shape[0]
    return LinkGainMatrix(
        h=linear["cue_bs"],
        g=v2v[np.arange(k), np.arange(k)],
        htilde=linear["v2v_bs"],
        cue_to_v2v=linear["cue_v2v"],
        v2v_to_v2v=v2v,
    )
