# src/qmpx/network.py

"""Network scenarios and the assembly of per-variable QMP subproblems.

Three structural families cover all supported cases:

* ``oneway``  - sources -> (optional relay stage) -> destinations. With no
  relays this is the single-hop family (multi-user up/downlink, multi-cell,
  cognitive-radio and energy-harvesting point-to-point links); with relays
  it is the two-hop amplify-and-forward mesh.
* ``chain``   - one source, a string of amplify-and-forward nodes, one
  destination, with the coupled per-node power recursion.
* ``twoway``  - two terminals exchanging data through parallel relays in
  two slots, each terminal cancelling its own echo before equalization.

All second moments route through :class:`~qmpx.robust.ChannelMoments`, so
the same assembly serves exact channels and Kronecker-error robust
designs. Every subproblem is reduced to T2 form: matrix-shaped with the
common right factor whitened away, or vectorized (r = 1) when the
destinations see different middles (the two-way relay step).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParams, ShapeMismatch, UnknownVariable
from .linalg import (
    as_matrix,
    crandn,
    hermitian_inv_sqrt,
    hermitian_sqrt,
    hermitianize,
    kron,
    unvec,
    vectorize,
)
from .qmp import QMFunction, QMPProblem
from .robust import ChannelError, ChannelMoments

CASES = (
    "MU_DL",
    "MU_UL",
    "MultiCell",
    "CognitiveRadio",
    "EnergyHarvest",
    "AFRelayTwoHop",
    "AFRelayMultiHop",
    "Example1",
    "Example2TwoWay",
)


@dataclass
class NetworkScenario:
    case: str
    family: str  # oneway | chain | twoway
    params: dict
    seed: int
    channels: dict  # key tuple -> complex matrix
    # oneway
    src_ant: list = field(default_factory=list)
    relay_rx: list = field(default_factory=list)
    relay_tx: list = field(default_factory=list)
    dst_ant: list = field(default_factory=list)
    streams: dict = field(default_factory=dict)  # (i, k) -> count
    r_s: dict = field(default_factory=dict)  # (i, k) -> covariance
    p_src: list = field(default_factory=list)
    p_relay: list = field(default_factory=list)
    r_n1: list = field(default_factory=list)
    r_n2: list = field(default_factory=list)
    extra_rows: list = field(default_factory=list)  # {"sense","key","threshold"}
    # chain
    node_tx: list = field(default_factory=list)
    node_rx: list = field(default_factory=list)
    p_node: list = field(default_factory=list)
    r_nhop: list = field(default_factory=list)
    chain_dst_ant: int = 0
    n_chain_streams: int = 0
    # twoway
    term_ant: list = field(default_factory=list)
    p_term: list = field(default_factory=list)
    r_nr: list = field(default_factory=list)
    r_nt: list = field(default_factory=list)
    r_st: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)  # channel key -> ChannelError
    notes: list = field(default_factory=list)

    # -- structure -------------------------------------------------------
    @property
    def n_src(self) -> int:
        return len(self.src_ant)

    @property
    def n_relay(self) -> int:
        return len(self.relay_rx)

    @property
    def n_dst(self) -> int:
        return len(self.dst_ant)

    def senders(self, k: int) -> list:
        return [i for i in range(self.n_src) if self.streams.get((i, k), 0) > 0]

    def moments(self) -> ChannelMoments:
        table = {}
        for key, h in self.channels.items():
            if key in self.errors:
                e = self.errors[key]
                table[key] = ChannelError(h, e.sigma, e.psi)
            else:
                table[key] = ChannelError.exact(h)
        return ChannelMoments(table)

    def with_snr(self, snr_db: float) -> "NetworkScenario":
        """Same channels and errors, second-stage noise set from ``snr_db``."""
        params = dict(self.params)
        params[_SWEEP_KEY[self.case]] = float(snr_db)
        out = make_case(self.case, seed=self.seed, **params)
        out.channels = dict(self.channels)
        out.errors = dict(self.errors)
        return out

    def redraw(self, seed: int) -> "NetworkScenario":
        """Fresh channel realization with the same configuration."""
        out = make_case(self.case, seed=seed, **self.params)
        out.errors = dict(self.errors)
        return out


@dataclass
class DesignState:
    mats: dict  # variable id -> matrix
    objective_trace: list = field(default_factory=list)
    sweeps: int = 0
    pre_projection_mse: float | None = None

    def copy(self) -> "DesignState":
        return DesignState(
            mats={k: v.copy() for k, v in self.mats.items()},
            objective_trace=list(self.objective_trace),
            sweeps=self.sweeps,
            pre_projection_mse=self.pre_projection_mse,
        )

    def get(self, var):
        return self.mats[var]

    def replaced(self, var, value) -> "DesignState":
        out = self.copy()
        out.mats[var] = np.asarray(value, dtype=complex)
        return out


_SWEEP_KEY = {
    "MU_DL": "snr_db",
    "MU_UL": "snr_db",
    "MultiCell": "snr_db",
    "CognitiveRadio": "snr_db",
    "EnergyHarvest": "snr_db",
    "AFRelayTwoHop": "snr2_db",
    "AFRelayMultiHop": "snr_db",
    "Example1": "e_rd_db",
    "Example2TwoWay": "e_rs_db",
}


def _noise_var(power: float, n_tx: int, snr_db: float) -> float:
    # SNR definition E = P / (N sigma^2)
    return power / (n_tx * 10.0 ** (snr_db / 10.0))


def _eye_cov(dim: int, var: float) -> np.ndarray:
    return var * np.eye(dim)


# ---------------------------------------------------------------------------
# case construction
# ---------------------------------------------------------------------------


def make_case(case: str, seed: int = 0, **params) -> NetworkScenario:
    """Build a scenario for one of the supported case tags.

    Channels not supplied explicitly are drawn i.i.d. unit-variance complex
    Gaussian from ``seed``. Power budgets default to 1 and noise levels
    derive from the SNR definition E = P / (N_tx sigma^2).
    """
    if case not in CASES:
        raise InvalidParams(f"unknown case tag {case!r}")
    rng = np.random.default_rng(seed)
    s = NetworkScenario(case=case, family="oneway", params=dict(params), seed=seed, channels={})

    def draw(key, rows, cols):
        s.channels[key] = crandn(rng, rows, cols)

    if case in ("MU_DL", "MU_UL", "MultiCell", "CognitiveRadio", "EnergyHarvest"):
        snr_db = float(params.get("snr_db", 20.0))
        if case == "MU_DL":
            k_users = int(params.get("n_users", 2))
            n_bs = int(params.get("n_bs", 4))
            n_ue = int(params.get("n_ue", 2))
            p = float(params.get("power", 1.0))
            s.src_ant = [n_bs]
            s.p_src = [p]
            s.dst_ant = [n_ue] * k_users
            for k in range(k_users):
                s.streams[(0, k)] = n_ue
                draw(("sd", 0, k), n_ue, n_bs)
            sigma2 = _noise_var(p, n_bs, snr_db)
            s.r_n2 = [_eye_cov(n_ue, sigma2) for _ in range(k_users)]
        elif case == "MU_UL":
            k_users = int(params.get("n_users", 2))
            n_bs = int(params.get("n_bs", 4))
            n_ue = int(params.get("n_ue", 2))
            p = float(params.get("power", 1.0))
            s.src_ant = [n_ue] * k_users
            s.p_src = [p] * k_users
            s.dst_ant = [n_bs]
            for i in range(k_users):
                s.streams[(i, 0)] = n_ue
                draw(("sd", i, 0), n_bs, n_ue)
            sigma2 = _noise_var(p, n_ue, snr_db)
            s.r_n2 = [_eye_cov(n_bs, sigma2)]
        elif case == "MultiCell":
            k_cells = int(params.get("n_cells", 2))
            n_tx = int(params.get("n_tx", 2))
            n_rx = int(params.get("n_rx", 2))
            p = float(params.get("power", 1.0))
            s.src_ant = [n_tx] * k_cells
            s.p_src = [p] * k_cells
            s.dst_ant = [n_rx] * k_cells
            for i in range(k_cells):
                s.streams[(i, i)] = min(n_tx, n_rx)
                for k in range(k_cells):
                    draw(("sd", i, k), n_rx, n_tx)
            sigma2 = _noise_var(p, n_tx, snr_db)
            s.r_n2 = [_eye_cov(n_rx, sigma2) for _ in range(k_cells)]
        else:  # CognitiveRadio / EnergyHarvest
            n_tx = int(params.get("n_tx", 4))
            n_rx = int(params.get("n_rx", 4))
            n_other = int(params.get("n_other", 2))
            p = float(params.get("power", 1.0))
            s.src_ant = [n_tx]
            s.p_src = [p]
            s.dst_ant = [n_rx]
            s.streams[(0, 0)] = min(n_tx, n_rx)
            draw(("sd", 0, 0), n_rx, n_tx)
            sigma2 = _noise_var(p, n_tx, snr_db)
            s.r_n2 = [_eye_cov(n_rx, sigma2)]
            draw(("xtra", 0), n_other, n_tx)
            if case == "CognitiveRadio":
                gamma = float(params.get("gamma", 0.1))
                s.extra_rows = [{"sense": "leq", "key": ("xtra", 0), "threshold": gamma, "source": 0}]
                if gamma == 0.0:
                    s.notes.append(
                        "interference threshold 0 forces the precoder into the null "
                        "space of the primary channel; feasible only with zero power "
                        "in that direction"
                    )
            else:
                gamma = params.get("gamma")
                if gamma is None:
                    # half of what the power-equality identity precoder harvests
                    hs = s.channels[("xtra", 0)]
                    scale = p / s.streams[(0, 0)]
                    gamma = 0.5 * scale * float(np.trace(hs[:, : s.streams[(0, 0)]] @ hs[:, : s.streams[(0, 0)]].conj().T).real)
                s.extra_rows = [{"sense": "geq", "key": ("xtra", 0), "threshold": float(gamma), "source": 0}]
        for (i, k) in s.streams:
            s.r_s[(i, k)] = np.eye(s.streams[(i, k)])
        return s

    if case in ("Example1", "AFRelayTwoHop"):
        if case == "Example1":
            n_t = int(params.get("n_t", 4))
            e_sr_db = float(params.get("e_sr_db", 20.0))
            e_rd_db = float(params.get("e_rd_db", 20.0))
            n_pairs = int(params.get("n_pairs", 2))
            n_relays = int(params.get("n_relays", 2))
            p_s = float(params.get("p_src", 1.0))
            p_r = float(params.get("p_relay", 1.0))
            s.src_ant = [n_t] * n_pairs
            s.dst_ant = [n_t] * n_pairs
            s.relay_rx = [n_t] * n_relays
            s.relay_tx = [n_t] * n_relays
            s.p_src = [p_s] * n_pairs
            s.p_relay = [p_r] * n_relays
            for i in range(n_pairs):
                s.streams[(i, i)] = n_t
            sigma1 = _noise_var(p_s, n_t, e_sr_db)
            sigma2 = _noise_var(p_r, n_t, e_rd_db)
            s.r_n1 = [_eye_cov(n_t, sigma1) for _ in range(n_relays)]
            s.r_n2 = [_eye_cov(n_t, sigma2) for _ in range(n_pairs)]
        else:
            n_src = int(params.get("n_src", 2))
            n_relays = int(params.get("n_relays", 2))
            n_dst = int(params.get("n_dst", 2))
            a_src = int(params.get("src_antennas", 2))
            a_rel = int(params.get("relay_antennas", 2))
            a_dst = int(params.get("dst_antennas", 2))
            snr1_db = float(params.get("snr1_db", 20.0))
            snr2_db = float(params.get("snr2_db", 20.0))
            p_s = float(params.get("p_src", 1.0))
            p_r = float(params.get("p_relay", 1.0))
            pairing = params.get("pairing") or [(i, i % n_dst) for i in range(n_src)]
            s.src_ant = [a_src] * n_src
            s.dst_ant = [a_dst] * n_dst
            s.relay_rx = [a_rel] * n_relays
            s.relay_tx = [a_rel] * n_relays
            s.p_src = [p_s] * n_src
            s.p_relay = [p_r] * n_relays
            for (i, k) in pairing:
                s.streams[(i, k)] = int(params.get("n_streams", min(a_src, a_dst)))
            s.r_n1 = [_eye_cov(a_rel, _noise_var(p_s, a_src, snr1_db)) for _ in range(n_relays)]
            s.r_n2 = [_eye_cov(a_dst, _noise_var(p_r, a_rel, snr2_db)) for _ in range(n_dst)]
        for i in range(s.n_src):
            for j in range(s.n_relay):
                draw(("sr", i, j), s.relay_rx[j], s.src_ant[i])
        for j in range(s.n_relay):
            for k in range(s.n_dst):
                draw(("rd", j, k), s.dst_ant[k], s.relay_tx[j])
        for (i, k) in s.streams:
            s.r_s[(i, k)] = np.eye(s.streams[(i, k)])
        return s

    if case == "AFRelayMultiHop":
        s.family = "chain"
        n_nodes = int(params.get("n_nodes", 3))
        ant = params.get("antennas", 2)
        ants = [int(a) for a in (ant if isinstance(ant, (list, tuple)) else [ant] * n_nodes)]
        if len(ants) != n_nodes:
            raise InvalidParams("antennas list must have one entry per node")
        n_streams = int(params.get("n_streams", ants[0]))
        dst = int(params.get("dst_antennas", ants[-1]))
        snr_db = float(params.get("snr_db", 20.0))
        powers = params.get("powers", 1.0)
        p_list = [float(x) for x in (powers if isinstance(powers, (list, tuple)) else [powers] * n_nodes)]
        s.n_chain_streams = n_streams
        s.chain_dst_ant = dst
        s.node_tx = ants
        s.node_rx = [n_streams] + ants[:-1]
        s.p_node = p_list
        s.r_nhop = []
        for idx in range(n_nodes):
            rows = ants[idx + 1] if idx + 1 < n_nodes else dst
            draw(("hop", idx), rows, ants[idx])
            s.r_nhop.append(_eye_cov(rows, _noise_var(p_list[idx], ants[idx], snr_db)))
        return s

    # Example2TwoWay
    s.family = "twoway"
    n_s = int(params.get("n_s", 2))
    n_r = int(params.get("n_r", 4))
    n_relays = int(params.get("n_relays", 2))
    e_sr_db = float(params.get("e_sr_db", 20.0))
    e_rs_db = float(params.get("e_rs_db", 20.0))
    p_s = float(params.get("p_src", 1.0))
    p_r = float(params.get("p_relay", 1.0))
    s.term_ant = [n_s, n_s]
    s.relay_rx = [n_r] * n_relays
    s.relay_tx = [n_r] * n_relays
    s.p_term = [p_s, p_s]
    s.p_relay = [p_r] * n_relays
    sigma_r = _noise_var(p_s, n_s, e_sr_db)
    sigma_t = _noise_var(p_r, n_r, e_rs_db)
    s.r_nr = [_eye_cov(n_r, sigma_r) for _ in range(n_relays)]
    s.r_nt = [_eye_cov(n_s, sigma_t), _eye_cov(n_s, sigma_t)]
    s.r_st = [np.eye(n_s), np.eye(n_s)]
    for t in range(2):
        for j in range(n_relays):
            draw(("t1", t, j), n_r, n_s)
            draw(("t2", j, t), n_s, n_r)
    return s


# ---------------------------------------------------------------------------
# variables
# ---------------------------------------------------------------------------


def transmit_variables(s: NetworkScenario) -> list:
    """Constrained variables, sources upstream-to-downstream, then relays."""
    if s.family == "oneway":
        out = [("P", i, k) for (i, k) in sorted(s.streams) if s.streams[(i, k)] > 0]
        out += [("F", j) for j in range(s.n_relay)]
        return out
    if s.family == "chain":
        return [("F", idx) for idx in range(len(s.node_tx))]
    return [("P", 0), ("P", 1)] + [("F", j) for j in range(len(s.relay_rx))]


def equalizer_variables(s: NetworkScenario) -> list:
    if s.family == "oneway":
        return [("G", k) for k in range(s.n_dst) if s.senders(k)]
    if s.family == "chain":
        return [("G", 0)]
    return [("G", 0), ("G", 1)]


def variable_shape(s: NetworkScenario, var) -> tuple:
    kind = var[0]
    if s.family == "oneway":
        if kind == "P":
            _, i, k = var
            return (s.src_ant[i], s.streams[(i, k)])
        if kind == "F":
            return (s.relay_tx[var[1]], s.relay_rx[var[1]])
        if kind == "G":
            k = var[1]
            d_len = sum(s.streams[(i, k)] for i in s.senders(k))
            return (d_len, s.dst_ant[k])
    elif s.family == "chain":
        if kind == "F":
            return (s.node_tx[var[1]], s.node_rx[var[1]])
        if kind == "G":
            return (s.n_chain_streams, s.chain_dst_ant)
    else:
        if kind == "P":
            t = var[1]
            return (s.term_ant[t], s.r_st[t].shape[0])
        if kind == "F":
            return (s.relay_tx[var[1]], s.relay_rx[var[1]])
        if kind == "G":
            t = var[1]
            return (s.r_st[1 - t].shape[0], s.term_ant[t])
    raise UnknownVariable(f"variable {var!r} not part of scenario {s.case}")


def zero_state(s: NetworkScenario) -> DesignState:
    mats = {}
    for var in transmit_variables(s) + equalizer_variables(s):
        mats[var] = np.zeros(variable_shape(s, var), dtype=complex)
    return DesignState(mats=mats)


# ---------------------------------------------------------------------------
# second-moment engine (shared by exact and robust designs)
# ---------------------------------------------------------------------------


def _source_tx_cov(s: NetworkScenario, d: DesignState, i: int, skip=None) -> np.ndarray:
    dim = s.src_ant[i]
    total = np.zeros((dim, dim), dtype=complex)
    for (ii, k), n in s.streams.items():
        if ii != i or n == 0 or (skip is not None and (ii, k) == skip):
            continue
        p = d.get(("P", ii, k))
        total = total + p @ s.r_s[(ii, k)] @ p.conj().T
    return total


def _relay_input_cross(s, d, m: ChannelMoments, j: int, jp: int, skip=None) -> np.ndarray:
    """E{x_j x_jp^H} for the oneway mesh (noise only on the diagonal)."""
    dim_j, dim_jp = s.relay_rx[j], s.relay_rx[jp]
    total = np.zeros((dim_j, dim_jp), dtype=complex)
    for i in range(s.n_src):
        t_i = _source_tx_cov(s, d, i, skip=skip)
        if j == jp:
            total = total + m.quad_right(("sr", i, j), t_i)
        else:
            total = total + m.mean(("sr", i, j)) @ t_i @ m.mean(("sr", i, jp)).conj().T
    if j == jp:
        total = total + s.r_n1[j]
    return total


def _mean_composite(s, m: ChannelMoments, d: DesignState, i: int, k: int) -> np.ndarray:
    """Mean source-i to destination-k map before the precoder."""
    if s.n_relay == 0:
        return m.mean(("sd", i, k))
    total = np.zeros((s.dst_ant[k], s.src_ant[i]), dtype=complex)
    for j in range(s.n_relay):
        total = total + m.mean(("rd", j, k)) @ d.get(("F", j)) @ m.mean(("sr", i, j))
    return total


def _dest_cov(s, d, m: ChannelMoments, k: int) -> np.ndarray:
    """E{y_k y_k^H} at destination k (oneway)."""
    dim = s.dst_ant[k]
    total = np.array(s.r_n2[k], dtype=complex)
    if s.n_relay == 0:
        for i in range(s.n_src):
            t_i = _source_tx_cov(s, d, i)
            total = total + m.quad_right(("sd", i, k), t_i)
        return hermitianize(total)
    for j in range(s.n_relay):
        f_j = d.get(("F", j))
        for jp in range(s.n_relay):
            f_jp = d.get(("F", jp))
            rx = _relay_input_cross(s, d, m, j, jp)
            if j == jp:
                total = total + m.quad_right(("rd", j, k), f_j @ rx @ f_j.conj().T)
            else:
                total = total + m.mean(("rd", j, k)) @ f_j @ rx @ f_jp.conj().T @ m.mean(("rd", jp, k)).conj().T
    return hermitianize(total)


def _dest_signal_cross(s, d, m: ChannelMoments, k: int) -> np.ndarray:
    """E{y_k d_k^H} stacked over the senders of destination k."""
    blocks = []
    for i in s.senders(k):
        p = d.get(("P", i, k))
        blocks.append(_mean_composite(s, m, d, i, k) @ p @ s.r_s[(i, k)])
    return np.hstack(blocks) if blocks else np.zeros((s.dst_ant[k], 0), dtype=complex)


# chain helpers -------------------------------------------------------------


def _chain_len(s) -> int:
    return len(s.node_tx)


def _chain_in_cov(s, d, m: ChannelMoments, upto: int, skip=None) -> np.ndarray:
    """Input covariance of node ``upto`` (R_0 = R_s at the source)."""
    r = np.eye(s.n_chain_streams, dtype=complex)
    for idx in range(upto):
        f = np.zeros_like(d.get(("F", idx))) if skip == idx else d.get(("F", idx))
        r = m.quad_right(("hop", idx), f @ r @ f.conj().T) + s.r_nhop[idx]
    return hermitianize(r)


def _chain_sig_cross(s, d, m: ChannelMoments, upto: int) -> np.ndarray:
    """E{x_idx s^H} at node ``upto``."""
    v = np.eye(s.n_chain_streams, dtype=complex)
    for idx in range(upto):
        v = m.mean(("hop", idx)) @ d.get(("F", idx)) @ v
    return v


def _chain_down_mean(s, d, m: ChannelMoments, frm: int) -> np.ndarray:
    """Mean map from node ``frm`` output to the destination antenna port."""
    out = m.mean(("hop", frm))
    for idx in range(frm + 1, _chain_len(s)):
        out = m.mean(("hop", idx)) @ d.get(("F", idx)) @ out
    return out


def _chain_down_quad(s, d, m: ChannelMoments, frm: int, top: np.ndarray, upto: int | None = None) -> np.ndarray:
    """E{W^H top W} for the map W from node ``frm`` output to node ``upto``
    input (destination when ``upto`` is None), expectations nested inward."""
    last = _chain_len(s) - 1 if upto is None else upto - 1
    q = np.array(top, dtype=complex)
    for idx in range(last, frm - 1, -1):
        if idx != last:
            f = d.get(("F", idx + 1))
            q = f.conj().T @ q @ f
        q = m.quad_left(("hop", idx), q)
    return hermitianize(q)


# twoway helpers ------------------------------------------------------------


def _tw_relay_seen_cross(s, d, m: ChannelMoments, t: int, j: int, jp: int, skip_p=None) -> np.ndarray:
    """E{u_j u_jp^H} of the self-cancelled relay inputs seen by terminal t."""
    o = 1 - t
    p_o = np.zeros_like(d.get(("P", o))) if skip_p == o else d.get(("P", o))
    t_o = p_o @ s.r_st[o] @ p_o.conj().T
    if j == jp:
        return hermitianize(m.quad_right(("t1", o, j), t_o) + s.r_nr[j])
    return m.mean(("t1", o, j)) @ t_o @ m.mean(("t1", o, jp)).conj().T


def _tw_relay_input_cov(s, d, m: ChannelMoments, j: int, skip_p=None) -> np.ndarray:
    """Full (uncancelled) relay input covariance R_x,j."""
    total = np.array(s.r_nr[j], dtype=complex)
    for t in range(2):
        p_t = np.zeros_like(d.get(("P", t))) if skip_p == t else d.get(("P", t))
        total = total + m.quad_right(("t1", t, j), p_t @ s.r_st[t] @ p_t.conj().T)
    return hermitianize(total)


def _tw_dest_cov(s, d, m: ChannelMoments, t: int) -> np.ndarray:
    total = np.array(s.r_nt[t], dtype=complex)
    nrel = len(s.relay_rx)
    for j in range(nrel):
        f_j = d.get(("F", j))
        for jp in range(nrel):
            f_jp = d.get(("F", jp))
            ru = _tw_relay_seen_cross(s, d, m, t, j, jp)
            if j == jp:
                total = total + m.quad_right(("t2", j, t), f_j @ ru @ f_j.conj().T)
            else:
                total = total + m.mean(("t2", j, t)) @ f_j @ ru @ f_jp.conj().T @ m.mean(("t2", jp, t)).conj().T
    return hermitianize(total)


def _tw_dest_cross(s, d, m: ChannelMoments, t: int) -> np.ndarray:
    o = 1 - t
    total = np.zeros((s.term_ant[t], s.r_st[o].shape[0]), dtype=complex)
    for j in range(len(s.relay_rx)):
        total = total + m.mean(("t2", j, t)) @ d.get(("F", j)) @ m.mean(("t1", o, j)) @ d.get(("P", o)) @ s.r_st[o]
    return total


# ---------------------------------------------------------------------------
# sum MSE and powers
# ---------------------------------------------------------------------------


def sum_mse(s: NetworkScenario, d: DesignState, moments: ChannelMoments | None = None) -> float:
    """Analytic sum of per-destination MSEs for the current design state."""
    m = moments or s.moments()
    total = 0.0
    if s.family == "oneway":
        for k in range(s.n_dst):
            if not s.senders(k):
                continue
            g = d.get(("G", k))
            ry = _dest_cov(s, d, m, k)
            phi = _dest_signal_cross(s, d, m, k)
            r_d = sum(float(np.trace(s.r_s[(i, k)]).real) for i in s.senders(k))
            total += float(
                np.trace(g @ ry @ g.conj().T).real - 2 * np.trace(g @ phi).real + r_d
            )
        return total
    if s.family == "chain":
        g = d.get(("G", 0))
        kk = _chain_len(s)
        f_last = d.get(("F", kk - 1))
        r_in = _chain_in_cov(s, d, m, kk - 1)
        ry = m.quad_right(("hop", kk - 1), f_last @ r_in @ f_last.conj().T) + s.r_nhop[kk - 1]
        phi = m.mean(("hop", kk - 1)) @ f_last @ _chain_sig_cross(s, d, m, kk - 1)
        return float(
            np.trace(g @ ry @ g.conj().T).real
            - 2 * np.trace(g @ phi).real
            + s.n_chain_streams
        )
    for t in range(2):
        g = d.get(("G", t))
        ry = _tw_dest_cov(s, d, m, t)
        phi = _tw_dest_cross(s, d, m, t)
        total += float(
            np.trace(g @ ry @ g.conj().T).real
            - 2 * np.trace(g @ phi).real
            + np.trace(s.r_st[1 - t]).real
        )
    return total


def power_usage(s: NetworkScenario, d: DesignState, moments: ChannelMoments | None = None) -> dict:
    """Actual transmit powers per constrained node (relay powers include the
    dependence of the forwarded covariance on the upstream precoders)."""
    m = moments or s.moments()
    out = {}
    if s.family == "oneway":
        for i in range(s.n_src):
            out[("src", i)] = float(np.trace(_source_tx_cov(s, d, i)).real)
        for j in range(s.n_relay):
            f = d.get(("F", j))
            rx = _relay_input_cross(s, d, m, j, j)
            out[("relay", j)] = float(np.trace(f @ rx @ f.conj().T).real)
    elif s.family == "chain":
        for idx in range(_chain_len(s)):
            f = d.get(("F", idx))
            r_in = _chain_in_cov(s, d, m, idx)
            out[("node", idx)] = float(np.trace(f @ r_in @ f.conj().T).real)
    else:
        for t in range(2):
            p = d.get(("P", t))
            out[("term", t)] = float(np.trace(p @ s.r_st[t] @ p.conj().T).real)
        for j in range(len(s.relay_rx)):
            f = d.get(("F", j))
            out[("relay", j)] = float(np.trace(f @ _tw_relay_input_cov(s, d, m, j) @ f.conj().T).real)
    return out


def power_budgets(s: NetworkScenario) -> dict:
    if s.family == "oneway":
        out = {("src", i): s.p_src[i] for i in range(s.n_src)}
        out.update({("relay", j): s.p_relay[j] for j in range(s.n_relay)})
        return out
    if s.family == "chain":
        return {("node", idx): s.p_node[idx] for idx in range(_chain_len(s))}
    out = {("term", t): s.p_term[t] for t in range(2)}
    out.update({("relay", j): s.p_relay[j] for j in range(len(s.relay_rx))})
    return out


def extra_row_values(s: NetworkScenario, d: DesignState) -> list:
    """Current values of the interference / harvesting side conditions."""
    vals = []
    for row in s.extra_rows:
        i = row["source"]
        h = s.channels[row["key"]]
        total = 0.0
        for (ii, k), n in s.streams.items():
            if ii != i or n == 0:
                continue
            p = d.get(("P", ii, k))
            total += float(np.trace(h @ p @ s.r_s[(ii, k)] @ p.conj().T @ h.conj().T).real)
        vals.append({"sense": row["sense"], "value": total, "threshold": row["threshold"]})
    return vals


# ---------------------------------------------------------------------------
# per-variable QMP subproblems
# ---------------------------------------------------------------------------


@dataclass
class Subproblem:
    """T2 QMP problem for one variable, plus the map back to the network.

    ``problem`` is posed in a whitened matrix variable (X~ = X M^{1/2}),
    a vectorized variable (r = 1) or, for equalizers, the conjugate
    transpose X = G^H. ``to_native`` undoes the transformation, and
    ``evaluate(problem.objective, X~)`` equals the sum MSE at the
    corresponding native point exactly.
    """

    var: tuple
    problem: QMPProblem
    form: str  # "matrix" | "vec" | "adjoint"
    native_shape: tuple
    whitener: np.ndarray | None = None
    whitener_inv: np.ndarray | None = None

    def to_native(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        if self.form == "matrix":
            return x @ self.whitener_inv
        if self.form == "adjoint":
            return x.conj().T
        return unvec(x.reshape(-1), *self.native_shape)

    def from_native(self, x_native: np.ndarray) -> np.ndarray:
        x_native = np.asarray(x_native, dtype=complex)
        if self.form == "matrix":
            return x_native @ self.whitener
        if self.form == "adjoint":
            return x_native.conj().T
        return vectorize(x_native)


def _assemble_matrix_t2(var, a_obj, b_obj, c_obj, rows, middle, shape) -> Subproblem:
    """Whiten the common right factor away: X~ = X middle^{1/2}."""
    w_half = hermitian_sqrt(middle)
    w_keep = np.linalg.eigvalsh(hermitianize(middle))
    if w_keep[0] <= 1e-12 * max(1.0, w_keep[-1]):
        # singular middle: fall back to the vectorized form
        terms = [(a_obj, middle)]
        vrows = [(kron(mid.T if mid is not None else middle.T, a_r), c_r) for (a_r, mid, c_r) in rows]
        return _assemble_vec_t2(var, terms, b_obj, c_obj, vrows, shape)
    w_inv = hermitian_inv_sqrt(middle)
    obj = QMFunction(A=a_obj, B=b_obj @ w_inv, D=np.eye(middle.shape[0]), c=c_obj)
    cons = []
    for (a_r, mid, c_r) in rows:
        cons.append(QMFunction(A=a_r, B=np.zeros((a_r.shape[0], middle.shape[0])), D=np.eye(middle.shape[0]), c=c_r))
    prob = QMPProblem(objective=obj, inequalities=tuple(cons), kind="T2")
    return Subproblem(var=var, problem=prob, form="matrix", native_shape=shape,
                      whitener=w_half, whitener_inv=w_inv)


def _assemble_vec_t2(var, terms, b_obj, c_obj, vrows, shape) -> Subproblem:
    """Vectorized fallback: X = vec of the native matrix, r = 1."""
    dim = shape[0] * shape[1]
    a_vec = np.zeros((dim, dim), dtype=complex)
    for a_t, mid in terms:
        a_vec = a_vec + kron(as_matrix(mid).T, as_matrix(a_t))
    obj = QMFunction(A=hermitianize(a_vec), B=vectorize(b_obj), D=np.eye(1), c=c_obj)
    cons = []
    for (a_r, c_r) in vrows:
        cons.append(QMFunction(A=hermitianize(a_r), B=np.zeros((dim, 1)), D=np.eye(1), c=c_r))
    prob = QMPProblem(objective=obj, inequalities=tuple(cons), kind="T2")
    return Subproblem(var=var, problem=prob, form="vec", native_shape=shape)


def qm_for_variable(s: NetworkScenario, d: DesignState, var, moments: ChannelMoments | None = None) -> Subproblem:
    """QMP subproblem for ``var`` with every other variable frozen.

    Equalizers get unconstrained problems; transmit-side variables carry
    their own power row plus every row of the joint problem their variable
    enters (relay-input coupling, interference and harvesting conditions),
    so the incumbent always stays feasible for the next sub-step.
    """
    m = moments or s.moments()
    if var not in d.mats:
        raise UnknownVariable(f"{var!r} is not a variable of this scenario")
    shape = variable_shape(s, var)
    kind = var[0]

    if kind == "G":
        return _equalizer_subproblem(s, d, m, var)

    if s.family == "oneway":
        if kind == "P":
            return _oneway_precoder_subproblem(s, d, m, var)
        return _oneway_relay_subproblem(s, d, m, var)
    if s.family == "chain":
        return _chain_node_subproblem(s, d, m, var)
    if kind == "P":
        return _twoway_precoder_subproblem(s, d, m, var)
    return _twoway_relay_subproblem(s, d, m, var)


def _equalizer_subproblem(s, d, m, var) -> Subproblem:
    """Unconstrained T2 problem in X = G^H (Wiener form)."""
    if s.family == "oneway":
        k = var[1]
        ry = _dest_cov(s, d, m, k)
        phi = _dest_signal_cross(s, d, m, k)
    elif s.family == "chain":
        kk = _chain_len(s)
        f_last = d.get(("F", kk - 1))
        r_in = _chain_in_cov(s, d, m, kk - 1)
        ry = m.quad_right(("hop", kk - 1), f_last @ r_in @ f_last.conj().T) + s.r_nhop[kk - 1]
        phi = m.mean(("hop", kk - 1)) @ f_last @ _chain_sig_cross(s, d, m, kk - 1)
    else:
        t = var[1]
        ry = _tw_dest_cov(s, d, m, t)
        phi = _tw_dest_cross(s, d, m, t)
    zeroed = d.replaced(var, np.zeros(variable_shape(s, var), dtype=complex))
    c = sum_mse(s, zeroed, m)
    obj = QMFunction(A=hermitianize(ry), B=-phi, D=np.eye(phi.shape[1]), c=c)
    prob = QMPProblem(objective=obj, kind="T2")
    return Subproblem(var=var, problem=prob, form="adjoint", native_shape=variable_shape(s, var))


def _oneway_precoder_subproblem(s, d, m, var) -> Subproblem:
    _, i, k_dest = var
    shape = variable_shape(s, var)
    r_s = s.r_s[(i, k_dest)]
    # quadratic: every destination hears this stream through the composite map
    a = np.zeros((shape[0], shape[0]), dtype=complex)
    for k in range(s.n_dst):
        if not s.senders(k):
            continue
        g = d.get(("G", k))
        w = g.conj().T @ g
        if s.n_relay == 0:
            a = a + m.quad_left(("sd", i, k), w)
        else:
            for j in range(s.n_relay):
                f_j = d.get(("F", j))
                inner = m.quad_left(("rd", j, k), w)
                a = a + m.quad_left(("sr", i, j), f_j.conj().T @ inner @ f_j)
            for j in range(s.n_relay):
                for jp in range(s.n_relay):
                    if j == jp:
                        continue
                    left = m.mean(("rd", j, k)) @ d.get(("F", j)) @ m.mean(("sr", i, j))
                    right = m.mean(("rd", jp, k)) @ d.get(("F", jp)) @ m.mean(("sr", i, jp))
                    a = a + left.conj().T @ w @ right
    # linear: only the destination this stream is desired at
    g_b = d.get(("G", k_dest))
    senders = s.senders(k_dest)
    offset = 0
    for ii in senders:
        if ii == i:
            break
        offset += s.streams[(ii, k_dest)]
    g_block = g_b[offset: offset + s.streams[(i, k_dest)], :]
    b = -_mean_composite(s, m, d, i, k_dest).conj().T @ g_block.conj().T @ s.r_s[(i, k_dest)].conj().T
    zeroed = d.replaced(var, np.zeros(shape, dtype=complex))
    c = sum_mse(s, zeroed, m)

    rows = []
    frozen_src = float(np.trace(_source_tx_cov(s, zeroed, i)).real)
    rows.append((np.eye(shape[0]), None, frozen_src - s.p_src[i]))
    for j in range(s.n_relay):
        f_j = d.get(("F", j))
        a_row = m.quad_left(("sr", i, j), f_j.conj().T @ f_j)
        rx0 = _relay_input_cross(s, zeroed, m, j, j)
        frozen = float(np.trace(f_j @ rx0 @ f_j.conj().T).real)
        rows.append((a_row, None, frozen - s.p_relay[j]))
    for row in s.extra_rows:
        if row["source"] != i:
            continue
        h = s.channels[row["key"]]
        a_row = h.conj().T @ h
        others = 0.0
        for (ii, kk), n in s.streams.items():
            if ii != i or n == 0 or (ii, kk) == (i, k_dest):
                continue
            p = d.get(("P", ii, kk))
            others += float(np.trace(h @ p @ s.r_s[(ii, kk)] @ p.conj().T @ h.conj().T).real)
        if row["sense"] == "leq":
            rows.append((hermitianize(a_row), None, others - row["threshold"]))
        else:
            rows.append((hermitianize(-a_row), None, row["threshold"] - others))
    rows = [(hermitianize(ar), r_s, cr) for (ar, _, cr) in rows]
    return _assemble_matrix_t2(var, hermitianize(a), b, c, rows, r_s, shape)


def _oneway_relay_subproblem(s, d, m, var) -> Subproblem:
    j = var[1]
    shape = variable_shape(s, var)
    middle = _relay_input_cross(s, d, m, j, j)
    a = np.zeros((shape[0], shape[0]), dtype=complex)
    b = np.zeros(shape, dtype=complex)
    for k in range(s.n_dst):
        senders = s.senders(k)
        if not senders:
            continue
        g = d.get(("G", k))
        w = g.conj().T @ g
        a = a + m.quad_left(("rd", j, k), w)
        cross = np.zeros((s.dst_ant[k], s.relay_rx[j]), dtype=complex)
        for jp in range(s.n_relay):
            if jp == j:
                continue
            cross = cross + m.mean(("rd", jp, k)) @ d.get(("F", jp)) @ _relay_input_cross(s, d, m, jp, j)
        psi_blocks = []
        for i in senders:
            p = d.get(("P", i, k))
            psi_blocks.append(s.r_s[(i, k)] @ p.conj().T @ m.mean(("sr", i, j)).conj().T)
        psi = np.vstack(psi_blocks)
        b = b + m.mean(("rd", j, k)).conj().T @ (g.conj().T @ (g @ cross) - g.conj().T @ psi)
    zeroed = d.replaced(var, np.zeros(shape, dtype=complex))
    c = sum_mse(s, zeroed, m)
    rows = [(np.eye(shape[0]), middle, -s.p_relay[j])]
    return _assemble_matrix_t2(var, hermitianize(a), b, c, rows, middle, shape)


def _chain_node_subproblem(s, d, m, var) -> Subproblem:
    idx = var[1]
    kk = _chain_len(s)
    shape = variable_shape(s, var)
    middle = _chain_in_cov(s, d, m, idx)
    g = d.get(("G", 0))
    a = _chain_down_quad(s, d, m, idx, g.conj().T @ g)
    down_mean = _chain_down_mean(s, d, m, idx)
    v = _chain_sig_cross(s, d, m, idx)
    b = -down_mean.conj().T @ g.conj().T @ v.conj().T
    zeroed = d.replaced(var, np.zeros(shape, dtype=complex))
    c = sum_mse(s, zeroed, m)
    rows = [(np.eye(shape[0]), middle, -s.p_node[idx])]
    for node in range(idx + 1, kk):
        f_m = d.get(("F", node))
        a_row = _chain_down_quad(s, d, m, idx, f_m.conj().T @ f_m, upto=node)
        frozen = float(np.trace(f_m @ _chain_in_cov(s, zeroed, m, node) @ f_m.conj().T).real)
        rows.append((a_row, middle, frozen - s.p_node[node]))
    return _assemble_matrix_t2(var, hermitianize(a), b, c, rows, middle, shape)


def _twoway_precoder_subproblem(s, d, m, var) -> Subproblem:
    t = var[1]
    o = 1 - t
    shape = variable_shape(s, var)
    r_st = s.r_st[t]
    g_o = d.get(("G", o))
    w = g_o.conj().T @ g_o
    nrel = len(s.relay_rx)
    a = np.zeros((shape[0], shape[0]), dtype=complex)
    for j in range(nrel):
        f_j = d.get(("F", j))
        inner = m.quad_left(("t2", j, o), w)
        a = a + m.quad_left(("t1", t, j), f_j.conj().T @ inner @ f_j)
    for j in range(nrel):
        for jp in range(nrel):
            if j == jp:
                continue
            left = m.mean(("t2", j, o)) @ d.get(("F", j)) @ m.mean(("t1", t, j))
            right = m.mean(("t2", jp, o)) @ d.get(("F", jp)) @ m.mean(("t1", t, jp))
            a = a + left.conj().T @ w @ right
    comp = np.zeros((s.term_ant[o], shape[0]), dtype=complex)
    for j in range(nrel):
        comp = comp + m.mean(("t2", j, o)) @ d.get(("F", j)) @ m.mean(("t1", t, j))
    b = -comp.conj().T @ g_o.conj().T @ r_st.conj().T
    zeroed = d.replaced(var, np.zeros(shape, dtype=complex))
    c = sum_mse(s, zeroed, m)
    rows = [(np.eye(shape[0]), r_st, -s.p_term[t])]
    for j in range(nrel):
        f_j = d.get(("F", j))
        a_row = m.quad_left(("t1", t, j), f_j.conj().T @ f_j)
        frozen = float(np.trace(f_j @ _tw_relay_input_cov(s, zeroed, m, j) @ f_j.conj().T).real)
        rows.append((a_row, r_st, frozen - s.p_relay[j]))
    return _assemble_matrix_t2(var, hermitianize(a), b, c, rows, r_st, shape)


def _twoway_relay_subproblem(s, d, m, var) -> Subproblem:
    j = var[1]
    shape = variable_shape(s, var)
    terms = []
    b = np.zeros(shape, dtype=complex)
    nrel = len(s.relay_rx)
    for t in range(2):
        o = 1 - t
        g = d.get(("G", t))
        w = g.conj().T @ g
        a_t = m.quad_left(("t2", j, t), w)
        mid_t = _tw_relay_seen_cross(s, d, m, t, j, j)
        terms.append((a_t, mid_t))
        cross = np.zeros((s.term_ant[t], s.relay_rx[j]), dtype=complex)
        for jp in range(nrel):
            if jp == j:
                continue
            cross = cross + m.mean(("t2", jp, t)) @ d.get(("F", jp)) @ _tw_relay_seen_cross(s, d, m, t, jp, j)
        psi = s.r_st[o] @ d.get(("P", o)).conj().T @ m.mean(("t1", o, j)).conj().T
        b = b + m.mean(("t2", j, t)).conj().T @ (g.conj().T @ (g @ cross) - g.conj().T @ psi)
    zeroed = d.replaced(var, np.zeros(shape, dtype=complex))
    c = sum_mse(s, zeroed, m)
    rx = _tw_relay_input_cov(s, d, m, j)
    vrows = [(kron(rx.T, np.eye(shape[0])), -s.p_relay[j])]
    return _assemble_vec_t2(var, terms, b, c, vrows, shape)


# ---------------------------------------------------------------------------
# symbol-level simulation (QPSK, unit energy)
# ---------------------------------------------------------------------------


def _qpsk(rng: np.random.Generator, rows: int, n: int) -> np.ndarray:
    re = rng.integers(0, 2, size=(rows, n)) * 2 - 1
    im = rng.integers(0, 2, size=(rows, n)) * 2 - 1
    return (re + 1j * im) / np.sqrt(2.0)


def _noise(rng: np.random.Generator, cov: np.ndarray, n: int) -> np.ndarray:
    root = hermitian_sqrt(cov)
    return root @ crandn(rng, cov.shape[0], n)


def simulate_empirical_mse(
    s: NetworkScenario,
    d: DesignState,
    rng: np.random.Generator,
    n_symbols: int = 10000,
) -> float:
    """Average squared detection error over QPSK symbol transmissions."""
    if s.family == "oneway":
        sym = {
            (i, k): _qpsk(rng, n, n_symbols)
            for (i, k), n in s.streams.items()
            if n > 0
        }
        total = 0.0
        if s.n_relay:
            x = []
            for j in range(s.n_relay):
                xj = _noise(rng, s.r_n1[j], n_symbols)
                for (i, k), sm in sym.items():
                    xj = xj + s.channels[("sr", i, j)] @ d.get(("P", i, k)) @ sm
                x.append(d.get(("F", j)) @ xj)
        for k in range(s.n_dst):
            senders = s.senders(k)
            if not senders:
                continue
            y = _noise(rng, s.r_n2[k], n_symbols)
            if s.n_relay:
                for j in range(s.n_relay):
                    y = y + s.channels[("rd", j, k)] @ x[j]
            else:
                for (i, kk), sm in sym.items():
                    y = y + s.channels[("sd", i, k)] @ d.get(("P", i, kk)) @ sm
            desired = np.vstack([sym[(i, k)] for i in senders])
            err = d.get(("G", k)) @ y - desired
            total += float(np.mean(np.sum(np.abs(err) ** 2, axis=0)))
        return total
    if s.family == "chain":
        sym = _qpsk(rng, s.n_chain_streams, n_symbols)
        x = sym
        for idx in range(_chain_len(s)):
            x = s.channels[("hop", idx)] @ (d.get(("F", idx)) @ x) + _noise(rng, s.r_nhop[idx], n_symbols)
        err = d.get(("G", 0)) @ x - sym
        return float(np.mean(np.sum(np.abs(err) ** 2, axis=0)))
    # twoway
    sym = [_qpsk(rng, s.r_st[t].shape[0], n_symbols) for t in range(2)]
    fwd = []
    for j in range(len(s.relay_rx)):
        xj = _noise(rng, s.r_nr[j], n_symbols)
        for t in range(2):
            xj = xj + s.channels[("t1", t, j)] @ d.get(("P", t)) @ sym[t]
        fwd.append(d.get(("F", j)) @ xj)
    total = 0.0
    for t in range(2):
        y = _noise(rng, s.r_nt[t], n_symbols)
        for j in range(len(s.relay_rx)):
            y = y + s.channels[("t2", j, t)] @ fwd[j]
        # self-interference cancellation with known own symbols
        for j in range(len(s.relay_rx)):
            y = y - s.channels[("t2", j, t)] @ d.get(("F", j)) @ s.channels[("t1", t, j)] @ d.get(("P", t)) @ sym[t]
        err = d.get(("G", t)) @ y - sym[1 - t]
        total += float(np.mean(np.sum(np.abs(err) ** 2, axis=0)))
    return total


# ---------------------------------------------------------------------------
# scenario files
# ---------------------------------------------------------------------------


def _key_to_str(key) -> str:
    return ":".join(str(p) for p in key)


def _key_from_str(text: str):
    parts = text.split(":")
    return tuple(int(p) if p.lstrip("-").isdigit() else p for p in parts)


def scenario_to_json(s: NetworkScenario) -> dict:
    out = {"case": s.case, "seed": s.seed, "params": dict(s.params)}
    out["channels"] = {
        _key_to_str(k): [[[float(v.real), float(v.imag)] for v in row] for row in mat]
        for k, mat in s.channels.items()
    }
    if s.errors:
        out["errors"] = {
            _key_to_str(k): {
                "sigma": [[[float(v.real), float(v.imag)] for v in row] for row in e.sigma],
                "psi": [[[float(v.real), float(v.imag)] for v in row] for row in e.psi],
            }
            for k, e in s.errors.items()
        }
    return out


def _mat_from_json(rows) -> np.ndarray:
    return np.array([[complex(v[0], v[1]) for v in row] for row in rows])


def scenario_from_json(doc: dict) -> NetworkScenario:
    s = make_case(doc["case"], seed=int(doc.get("seed", 0)), **doc.get("params", {}))
    for key_s, rows in doc.get("channels", {}).items():
        key = _key_from_str(key_s)
        mat = _mat_from_json(rows)
        if key in s.channels and s.channels[key].shape != mat.shape:
            raise ShapeMismatch(f"channel {key_s} has shape {mat.shape}, expected {s.channels[key].shape}")
        s.channels[key] = mat
    for key_s, spec in doc.get("errors", {}).items():
        key = _key_from_str(key_s)
        s.errors[key] = ChannelError(
            s.channels[key], _mat_from_json(spec["sigma"]), _mat_from_json(spec["psi"])
        )
    return s


def save_scenario(s: NetworkScenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_json(s), fh)


def load_scenario(path) -> NetworkScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_json(json.load(fh))
