"""Synthetic longitudinal road-network datasets.

Stands in for the private inspection dataset: a near-planar jittered-lattice
graph, first-year feature marginals matched to the published column
statistics, and a first-order Markov deterioration process with additive
Gaussian noise. Two mechanisms carry the signals the model family is built
to exploit:

* spatial contagion — a segment's annual PCI decline grows with the mean
  PCI deficit of its graph neighbors (strength ``gamma``), so neighborhood
  state is genuinely predictive;
* temporal drift — a static per-segment deterioration-rate multiplier, so a
  segment's recent trajectory (visible through its evolving condition
  features) predicts its next decline.

All randomness is drawn in a fixed vectorized order, which makes runs
deterministic per seed and keeps trajectories of untouched nodes
bit-identical when single-node overrides are injected under ``gamma=0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .dataset import FEATURE_NAMES, SnapshotSeries
from .graph import RoadGraph, load_graph


class SynthError(ValueError):
    pass


# Published per-column statistics: (min, max, mean, std).
COLUMN_STATS: Mapping[str, tuple[float, float, float, float]] = {
    "material": (0.0, 1.0, 0.74, 0.44),
    "agg_type": (0.0, 1.0, 0.87, 0.34),
    "flood_risk": (0.0, 2.0, 0.93, 0.86),
    "proximity_quarry": (0.0, 1.0, 0.26, 0.44),
    "age_yrs": (2.0, 11.0, 6.56, 2.28),
    "traffic_aadt": (5004.0, 19977.0, 9481.24, 4039.14),
    "truck_factor": (1.0, 11.99, 5.77, 3.09),
    "ept_mm": (120.6, 320.0, 253.80, 58.69),
    "base_modulus": (150.8, 499.6, 349.56, 103.09),
    "crack_area_pct": (0.0, 21.92, 4.32, 3.95),
    "iri": (1.0, 5.66, 2.65, 0.69),
    "pci": (36.65, 97.05, 80.99, 9.13),
}

PCI_MIN, PCI_MAX = COLUMN_STATS["pci"][0], COLUMN_STATS["pci"][1]


@dataclass(frozen=True)
class DeteriorationModel:
    """Coefficients of the annual PCI decline process.

    Decline for segment i over one year (deficit = 100 - PCI):

        rate_i * (base + traffic + truck + structural + age + flood + condition)
        + gamma * [ contagion_scale * (mean neighbor deficit - reference)
                    + flood_spillover * (mean neighbor flood risk - network mean)
                    + decline_propagation * (mean neighbor decline last year
                                             - network mean) ]
        + noise

    The three gamma terms are the spatial-contagion mechanisms: standing
    neighborhood damage, drainage coupling to flood-prone neighbors, and
    propagation of the neighbors' most recent deterioration (zero on the
    first transition). Each is centered on its network mean per year, so
    contagion redistributes decline toward worse-than-average neighborhoods
    without shifting the network-wide trajectory. ``rate_i`` is the static
    drift multiplier (1.0 everywhere when drift is disabled); with
    ``gamma = 0`` the process is node-independent.
    """

    base_decline: float = 0.55
    traffic_coef: float = 0.90
    truck_coef: float = 0.50
    ept_coef: float = 0.70
    modulus_coef: float = 0.60
    age_coef: float = 0.06
    flood_coef: float = 0.35
    crack_feedback: float = 0.06
    iri_feedback: float = 0.25
    contagion_scale: float = 0.35
    flood_spillover: float = 4.5
    decline_propagation: float = 3.2
    deficit_reference: float | None = None
    crack_per_deficit: float = 0.24
    iri_per_deficit: float = 0.088
    crack_noise: float = 0.2
    iri_noise: float = 0.08


@dataclass(frozen=True)
class SynthConfig:
    num_segments: int = 750
    start_year: int = 2021
    num_years: int = 4
    directed_arcs: int = 1498
    gamma: float = 0.5
    drift_std: float = 0.55
    noise_std: float = 0.45
    seed: int = 0
    initial_pci_mean: float = 86.0
    initial_pci_std: float = 5.8
    marginals: Mapping[str, tuple[float, float, float, float]] = field(
        default_factory=lambda: dict(COLUMN_STATS)
    )
    dynamics: DeteriorationModel = field(default_factory=DeteriorationModel)

    def __post_init__(self):
        if self.num_segments < 2 or self.num_years < 2:
            raise SynthError("need at least 2 segments and 2 years")
        if self.gamma < 0:
            raise SynthError(f"gamma must be >= 0, got {self.gamma}")
        if self.directed_arcs % 2 != 0 or self.directed_arcs < 2:
            raise SynthError(
                f"directed arc count must be a positive even number, got {self.directed_arcs}"
            )


def _bounds(cfg: SynthConfig, name: str) -> tuple[float, float]:
    lo, hi, _, _ = cfg.marginals[name]
    return lo, hi


def _trunc_normal(rng, n, mean, std, lo, hi) -> np.ndarray:
    return np.clip(rng.normal(mean, std, size=n), lo, hi)


def _lattice_graph(cfg: SynthConfig, rng: np.random.Generator) -> RoadGraph:
    """Jittered 2-D lattice trimmed to exactly the requested arc count.

    Candidate edges are the 4-neighbor lattice adjacencies (augmented with
    diagonals if the lattice alone cannot supply enough), kept in order of
    jittered euclidean length, which yields a road-like near-planar network.
    """
    n = cfg.num_segments
    target_edges = cfg.directed_arcs // 2
    cols = int(np.ceil(np.sqrt(n)))
    rows = int(np.ceil(n / cols))
    pos = np.zeros((n, 2))
    for i in range(n):
        r, c = divmod(i, cols)
        pos[i] = (r, c)
    pos += rng.uniform(-0.35, 0.35, size=(n, 2))

    def neighbors_of(i: int, diagonal: bool) -> list[int]:
        r, c = divmod(i, cols)
        steps = [(0, 1), (1, 0)] if not diagonal else [(1, 1), (1, -1)]
        out = []
        for dr, dc in steps:
            rr, cc = r + dr, c + dc
            j = rr * cols + cc
            if 0 <= cc < cols and rr >= 0 and j < n:
                out.append(j)
        return out

    candidates = [(i, j) for i in range(n) for j in neighbors_of(i, False)]
    if len(candidates) < target_edges:
        candidates += [(i, j) for i in range(n) for j in neighbors_of(i, True)]
    if len(candidates) < target_edges:
        raise SynthError(
            f"cannot realize {cfg.directed_arcs} arcs over {n} segments "
            f"(candidate pool {2 * len(candidates)})"
        )
    lengths = np.array([np.linalg.norm(pos[i] - pos[j]) for i, j in candidates])
    keep = np.argsort(lengths, kind="stable")[:target_edges]

    width = len(str(n))
    ids = [f"S{i:0{width}d}" for i in range(n)]
    pairs = [(ids[candidates[k][0]], ids[candidates[k][1]]) for k in keep]
    return load_graph(ids, pairs)


def _initial_features(
    cfg: SynthConfig, rng: np.random.Generator
) -> dict[str, np.ndarray]:
    n = cfg.num_segments
    m = cfg.marginals
    flood_mean, flood_std = m["flood_risk"][2], m["flood_risk"][3]
    # Three-level categorical matching the published mean and std.
    p2 = (flood_std**2 + flood_mean**2 - flood_mean) / 2.0
    p1 = flood_mean - 2.0 * p2
    probs = np.array([1.0 - p1 - p2, p1, p2])

    cols: dict[str, np.ndarray] = {}
    cols["material"] = (rng.random(n) < m["material"][2]).astype(float)
    cols["agg_type"] = (rng.random(n) < m["agg_type"][2]).astype(float)
    cols["flood_risk"] = rng.choice(3, size=n, p=probs).astype(float)
    cols["proximity_quarry"] = (rng.random(n) < m["proximity_quarry"][2]).astype(float)
    # Base-year ages on [2, 8]; the +1/year increments spread the pooled
    # distribution across the published [2, 11] range.
    age_hi = max(2, int(m["age_yrs"][1]) - (cfg.num_years - 1))
    cols["age_yrs"] = rng.integers(2, age_hi + 1, size=n).astype(float)
    for name in ("traffic_aadt", "truck_factor", "ept_mm", "base_modulus"):
        lo, hi, mean, std = m[name]
        cols[name] = _trunc_normal(rng, n, mean, std, lo, hi)
    return cols


def generate(
    config: SynthConfig,
    overrides: Mapping[int, Mapping[str, float]] | None = None,
) -> tuple[RoadGraph, SnapshotSeries]:
    """Generate a full (graph, snapshot series) dataset.

    ``overrides`` patches initial-year values for selected node indices
    (feature name or ``"pci"`` -> value) after all random draws are made, so
    the untouched nodes' random streams are unchanged.
    """
    cfg = config
    dyn = cfg.dynamics
    rng = np.random.default_rng(cfg.seed)
    n, t = cfg.num_segments, cfg.num_years

    graph = _lattice_graph(cfg, rng)
    cols = _initial_features(cfg, rng)
    pci = _trunc_normal(
        rng, n, cfg.initial_pci_mean, cfg.initial_pci_std, PCI_MIN, PCI_MAX
    )
    crack_noise0 = rng.normal(0.0, dyn.crack_noise, size=n)
    iri_noise0 = rng.normal(0.0, dyn.iri_noise, size=n)
    rate = np.exp(rng.normal(-0.5 * cfg.drift_std**2, cfg.drift_std, size=n))
    yearly = [
        {
            "decline_noise": rng.normal(0.0, cfg.noise_std, size=n),
            "aadt_growth": rng.normal(0.02, 0.01, size=n),
            "truck_noise": rng.normal(0.0, 0.15, size=n),
            "ept_wear": np.abs(rng.normal(1.0, 0.5, size=n)),
            "modulus_wear": np.abs(rng.normal(2.0, 1.0, size=n)),
            "crack_noise": rng.normal(0.0, dyn.crack_noise, size=n),
            "iri_noise": rng.normal(0.0, dyn.iri_noise, size=n),
        }
        for _ in range(t - 1)
    ]

    def apply_overrides(names):
        for node, patch in (overrides or {}).items():
            for name, value in patch.items():
                if name not in set(FEATURE_NAMES) | {"pci"}:
                    raise SynthError(f"unknown override column {name!r}")
                if name not in names:
                    continue
                if name == "pci":
                    pci[node] = float(value)
                else:
                    cols[name][node] = float(value)

    def condition_from_pci(pci_now, crack_eps, iri_eps):
        deficit = 100.0 - pci_now
        crack = np.clip(
            dyn.crack_per_deficit * deficit - 0.2 + crack_eps, *_bounds(cfg, "crack_area_pct")
        )
        iri = np.clip(1.0 + dyn.iri_per_deficit * deficit + iri_eps, *_bounds(cfg, "iri"))
        return crack, iri

    apply_overrides(set(cols) | {"pci"})
    cols["crack_area_pct"], cols["iri"] = condition_from_pci(pci, crack_noise0, iri_noise0)
    apply_overrides({"crack_area_pct", "iri"})

    neighbor_lists = graph.neighbors
    features = np.zeros((t, n, len(FEATURE_NAMES)))
    targets = np.zeros((t, n))

    def snapshot(k: int):
        for f, name in enumerate(FEATURE_NAMES):
            features[k, :, f] = cols[name]
        targets[k] = pci

    def norm(name: str, values: np.ndarray) -> np.ndarray:
        lo, hi = _bounds(cfg, name)
        return (values - lo) / (hi - lo)

    snapshot(0)
    last_decline = np.zeros(n)
    for step in range(t - 1):
        draws = yearly[step]
        base = (
            dyn.base_decline
            + dyn.traffic_coef * norm("traffic_aadt", cols["traffic_aadt"])
            + dyn.truck_coef * norm("truck_factor", cols["truck_factor"])
            + dyn.ept_coef * (1.0 - norm("ept_mm", cols["ept_mm"]))
            + dyn.modulus_coef * (1.0 - norm("base_modulus", cols["base_modulus"]))
            + dyn.age_coef * cols["age_yrs"]
            + dyn.flood_coef * cols["flood_risk"]
            + dyn.crack_feedback * cols["crack_area_pct"]
            + dyn.iri_feedback * (cols["iri"] - 1.0)
        )
        decline = rate * base + draws["decline_noise"]
        if cfg.gamma > 0.0:
            deficit = 100.0 - pci

            def neighbor_mean(values: np.ndarray) -> tuple[np.ndarray, float]:
                ref = float(values.mean())
                agg = np.array(
                    [values[list(nbrs)].mean() if nbrs else ref for nbrs in neighbor_lists]
                )
                return agg, ref

            nb_deficit, deficit_ref = neighbor_mean(deficit)
            if dyn.deficit_reference is not None:
                deficit_ref = dyn.deficit_reference
            nb_flood, flood_ref = neighbor_mean(cols["flood_risk"])
            nb_recent, recent_ref = neighbor_mean(last_decline)
            decline = decline + cfg.gamma * (
                dyn.contagion_scale * (nb_deficit - deficit_ref)
                + dyn.flood_spillover * (nb_flood - flood_ref)
                + dyn.decline_propagation * (nb_recent - recent_ref)
            )
        pci_next = np.clip(pci - decline, PCI_MIN, PCI_MAX)
        last_decline = pci - pci_next
        pci = pci_next

        cols["age_yrs"] = np.minimum(cols["age_yrs"] + 1.0, _bounds(cfg, "age_yrs")[1])
        cols["traffic_aadt"] = np.clip(
            cols["traffic_aadt"] * (1.0 + draws["aadt_growth"]), *_bounds(cfg, "traffic_aadt")
        )
        cols["truck_factor"] = np.clip(
            cols["truck_factor"] + draws["truck_noise"], *_bounds(cfg, "truck_factor")
        )
        cols["ept_mm"] = np.clip(cols["ept_mm"] - draws["ept_wear"], *_bounds(cfg, "ept_mm"))
        cols["base_modulus"] = np.clip(
            cols["base_modulus"] - draws["modulus_wear"], *_bounds(cfg, "base_modulus")
        )
        cols["crack_area_pct"], cols["iri"] = condition_from_pci(
            pci, draws["crack_noise"], draws["iri_noise"]
        )
        snapshot(step + 1)

    years = tuple(range(cfg.start_year, cfg.start_year + t))
    series = SnapshotSeries(years=years, features=features, targets=targets)
    return graph, series


@dataclass(frozen=True)
class ContagionProbe:
    adjacent_corr: float
    nonadjacent_corr: float

    @property
    def gap(self) -> float:
        return self.adjacent_corr - self.nonadjacent_corr


def adjacency_correlation_gap(
    series: SnapshotSeries,
    graph: RoadGraph,
    seed: int = 0,
    num_pairs: int = 1000,
) -> ContagionProbe:
    """Pearson correlation of year-over-year PCI changes across node pairs.

    Pools (change_i, change_j) samples over all year transitions for up to
    ``num_pairs`` adjacent pairs versus the same number of random
    non-adjacent pairs.
    """
    deltas = np.diff(series.targets, axis=0)  # (T-1, N)
    rng = np.random.default_rng(seed)
    n = graph.num_nodes

    edges = list(graph.edges)
    if len(edges) > num_pairs:
        picked = rng.choice(len(edges), size=num_pairs, replace=False)
        adj_pairs = [edges[k] for k in picked]
    else:
        adj_pairs = edges

    edge_set = set(edges)
    non_pairs: list[tuple[int, int]] = []
    while len(non_pairs) < min(num_pairs, len(adj_pairs)):
        i, j = rng.integers(0, n, size=2)
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in edge_set:
            continue
        non_pairs.append((int(i), int(j)))

    def pooled_corr(pairs: Sequence[tuple[int, int]]) -> float:
        a = np.concatenate([deltas[:, i] for i, _ in pairs])
        b = np.concatenate([deltas[:, j] for _, j in pairs])
        return float(np.corrcoef(a, b)[0, 1])

    return ContagionProbe(
        adjacent_corr=pooled_corr(adj_pairs), nonadjacent_corr=pooled_corr(non_pairs)
    )


def contagion_strength_probe(
    series: SnapshotSeries,
    graph: RoadGraph,
    gamma: float,
    seed: int = 0,
    num_pairs: int = 1000,
) -> ContagionProbe:
    """Adjacency-correlation statistic for a contagion-enabled dataset."""
    if gamma <= 0.0:
        raise SynthError("probe is meaningless for a gamma=0 series")
    return adjacency_correlation_gap(series, graph, seed=seed, num_pairs=num_pairs)
