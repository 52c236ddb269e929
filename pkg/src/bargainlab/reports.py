"""Report emission: CSV table families and the figures rendered from them.

Four delimited families (IR, surplus/deal, drivers, quintiles) plus a
pairing-level table and a heatmap-ready long-format CSV keyed by
(buyer_model, seller_model, metric, value). Figures are written next to
the CSVs: one buyer-by-seller heatmap per headline metric and a quintile
profile chart. All outputs are byte-deterministic for a fixed input.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .domain import Regime, Role
from .metrics import (
    AggregateRow,
    PerNegotiationMetrics,
    QuintileRow,
    aggregate,
    quintile_decompose,
)

PAIRING_FIELDS = (
    "n",
    "deal_rate",
    "violation_rate_buyer",
    "violation_rate_seller",
    "violation_rate_any",
    "avg_utility_buyer_all",
    "avg_utility_seller_all",
    "avg_utility_buyer_deals",
    "avg_utility_seller_deals",
    "mean_surplus_buyer",
    "mean_surplus_seller",
    "mean_seller_init_aggr",
    "mean_buyer_init_aggr_gap",
    "mean_buyer_init_aggr_res",
    "mean_concession_buyer",
    "mean_concession_seller",
    "temporal_patience",
    "mean_turns",
)

HEATMAP_METRICS = (
    "deal_rate",
    "violation_rate_any",
    "mean_surplus_buyer",
    "mean_surplus_seller",
    "mean_seller_init_aggr",
    "mean_buyer_init_aggr_gap",
    "mean_concession_buyer",
    "mean_concession_seller",
    "temporal_patience",
)


def fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def write_pairings_csv(rows: list[AggregateRow], path: Path) -> None:
    header = ["buyer_model", "seller_model", "regime", *PAIRING_FIELDS]
    out = []
    for row in rows:
        out.append(
            [
                row.group.get("buyer_model", ""),
                row.group.get("seller_model", ""),
                row.group.get("regime", ""),
                str(row.n),
                *[
                    fmt(row.metric(name)) if name != "n" else str(row.n)
                    for name in PAIRING_FIELDS
                    if name != "n"
                ],
            ]
        )
    _write_csv(path, header, out)


def _role_rows(metrics: Sequence[PerNegotiationMetrics]) -> list[tuple[str, Role, str, AggregateRow]]:
    """Aggregate per (model, role, regime), averaging over all opponents."""
    out = []
    for role, group_key in ((Role.BUYER, "buyer_model"), (Role.SELLER, "seller_model")):
        for row in aggregate(metrics, group_by=(group_key, "regime")):
            out.append((row.group[group_key], role, row.group["regime"], row))
    out.sort(key=lambda item: (item[0], item[1].value, item[2]))
    return out


def write_ir_csv(metrics: Sequence[PerNegotiationMetrics], path: Path) -> None:
    """Violation rates per model and role: own violations and induced ones."""
    header = ["model", "role", "regime", "n", "violation_self", "violation_opponent",
              "violation_any"]
    rows = []
    for model, role, regime, agg in _role_rows(metrics):
        self_rate = agg.violation_rate_buyer if role is Role.BUYER else agg.violation_rate_seller
        opp_rate = agg.violation_rate_seller if role is Role.BUYER else agg.violation_rate_buyer
        rows.append([model, role.value, regime, str(agg.n), fmt(self_rate), fmt(opp_rate),
                     fmt(agg.violation_rate_any)])
    _write_csv(path, header, rows)


def write_surplus_deal_csv(metrics: Sequence[PerNegotiationMetrics], path: Path) -> None:
    header = ["model", "role", "regime", "n", "surplus_share", "deal_rate",
              "avg_utility_all", "avg_utility_deals"]
    rows = []
    for model, role, regime, agg in _role_rows(metrics):
        if role is Role.BUYER:
            surplus, util_all, util_deals = (
                agg.mean_surplus_buyer, agg.avg_utility_buyer_all, agg.avg_utility_buyer_deals
            )
        else:
            surplus, util_all, util_deals = (
                agg.mean_surplus_seller, agg.avg_utility_seller_all, agg.avg_utility_seller_deals
            )
        rows.append([model, role.value, regime, str(agg.n), fmt(surplus), fmt(agg.deal_rate),
                     fmt(util_all), fmt(util_deals)])
    _write_csv(path, header, rows)


def write_drivers_csv(metrics: Sequence[PerNegotiationMetrics], path: Path) -> None:
    header = ["model", "role", "regime", "n", "init_aggressiveness", "init_aggr_alt",
              "concession_rate", "temporal_patience", "mean_turns"]
    rows = []
    for model, role, regime, agg in _role_rows(metrics):
        if role is Role.BUYER:
            init_aggr, init_alt, concession = (
                agg.mean_buyer_init_aggr_gap, agg.mean_buyer_init_aggr_res,
                agg.mean_concession_buyer,
            )
        else:
            init_aggr, init_alt, concession = (
                agg.mean_seller_init_aggr, None, agg.mean_concession_seller
            )
        rows.append([model, role.value, regime, str(agg.n), fmt(init_aggr), fmt(init_alt),
                     fmt(concession), fmt(agg.temporal_patience), fmt(agg.mean_turns)])
    _write_csv(path, header, rows)


def write_quintiles_csv(rows: list[QuintileRow], path: Path) -> None:
    header = ["model", "role", "regime", "metric", "q1", "q2", "q3", "q4", "q5",
              "spread", "n_q1", "n_q2", "n_q3", "n_q4", "n_q5"]
    out = []
    for row in rows:
        cells = [fmt(cell) for cell in row.cells]
        # spread derives from the cells as emitted, so the file is
        # self-consistent at its own precision
        present = [float(cell) for cell in cells if cell]
        spread = fmt(max(present) - min(present)) if present else ""
        out.append([
            row.model, row.role.value, row.regime, row.metric,
            *cells,
            spread,
            *[str(count) for count in row.counts],
        ])
    _write_csv(path, header, out)


def write_heatmap_long_csv(rows: list[AggregateRow], path: Path) -> None:
    """Long-format (buyer_model, seller_model, metric, value) per regime."""
    header = ["buyer_model", "seller_model", "regime", "metric", "value"]
    out = []
    for row in rows:
        for metric in HEATMAP_METRICS:
            value = row.metric(metric)
            if value is None:
                continue
            out.append([
                row.group["buyer_model"], row.group["seller_model"],
                row.group["regime"], metric, fmt(value),
            ])
    _write_csv(path, header, out)


def write_report_family(
    metrics: Sequence[PerNegotiationMetrics],
    out_dir: str | Path,
    figures: bool = True,
) -> dict[str, Path]:
    """Emit every table family (and figures) for a batch of negotiations."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pairing_rows = aggregate(metrics)
    quintile_rows: list[QuintileRow] = []
    for role in (Role.BUYER, Role.SELLER):
        try:
            quintile_rows.extend(quintile_decompose(list(metrics), keyed_by=role))
        except Exception:
            pass  # fewer than five points: quintile family simply absent

    paths = {
        "pairings": out_dir / "pairings.csv",
        "ir": out_dir / "ir.csv",
        "surplus_deal": out_dir / "surplus_deal.csv",
        "drivers": out_dir / "drivers.csv",
        "quintiles": out_dir / "quintiles.csv",
        "heatmap_long": out_dir / "heatmap_long.csv",
    }
    write_pairings_csv(pairing_rows, paths["pairings"])
    write_ir_csv(metrics, paths["ir"])
    write_surplus_deal_csv(metrics, paths["surplus_deal"])
    write_drivers_csv(metrics, paths["drivers"])
    write_quintiles_csv(quintile_rows, paths["quintiles"])
    write_heatmap_long_csv(pairing_rows, paths["heatmap_long"])
    if figures:
        paths.update(render_figures(pairing_rows, quintile_rows, out_dir))
    return paths


# --- figures -------------------------------------------------------------------

_FIG_METADATA = {"Software": "bargainlab"}  # fixed so output bytes are stable


def _heatmap(ax, buyers: list[str], sellers: list[str], grid: np.ndarray, title: str) -> None:
    masked = np.ma.masked_invalid(grid)
    image = ax.imshow(masked, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(sellers)), sellers, rotation=45, ha="right", fontsize=8)
    ax.set_yticks(range(len(buyers)), buyers, fontsize=8)
    ax.set_xlabel("seller model")
    ax.set_ylabel("buyer model")
    ax.set_title(title, fontsize=10)
    for i in range(len(buyers)):
        for j in range(len(sellers)):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=7)
    plt.colorbar(image, ax=ax, fraction=0.046)


def render_figures(
    pairing_rows: list[AggregateRow],
    quintile_rows: list[QuintileRow],
    out_dir: Path,
) -> dict[str, Path]:
    """Render pairwise heatmaps and quintile profiles to PNG files."""
    out: dict[str, Path] = {}
    by_regime: dict[str, list[AggregateRow]] = {}
    for row in pairing_rows:
        by_regime.setdefault(row.group["regime"], []).append(row)

    for regime, rows in sorted(by_regime.items()):
        buyers = sorted({r.group["buyer_model"] for r in rows})
        sellers = sorted({r.group["seller_model"] for r in rows})
        selected = ("deal_rate", "mean_surplus_buyer", "mean_surplus_seller",
                    "violation_rate_any")
        fig, axes = plt.subplots(2, 2, figsize=(10, 8))
        for ax, metric in zip(axes.flat, selected):
            grid = np.full((len(buyers), len(sellers)), np.nan)
            for row in rows:
                i = buyers.index(row.group["buyer_model"])
                j = sellers.index(row.group["seller_model"])
                value = row.metric(metric)
                if value is not None:
                    grid[i, j] = value
            _heatmap(ax, buyers, sellers, grid, f"{metric} ({regime})")
        fig.tight_layout()
        path = out_dir / f"heatmaps_{regime}.png"
        fig.savefig(path, dpi=120, metadata=_FIG_METADATA)
        plt.close(fig)
        out[f"heatmaps_{regime}"] = path

    if quintile_rows:
        fig, axes = plt.subplots(1, 2, figsize=(11, 4.5), sharey=False)
        for ax, role in zip(axes, (Role.BUYER, Role.SELLER)):
            surplus_metric = (
                "mean_surplus_buyer" if role is Role.BUYER else "mean_surplus_seller"
            )
            for row in quintile_rows:
                if row.role is not role or row.metric != surplus_metric:
                    continue
                if row.regime != Regime.GFT.value:
                    continue
                xs = np.arange(1, 6)
                ys = [np.nan if c is None else c for c in row.cells]
                ax.plot(xs, ys, marker="o", label=row.model)
            ax.set_xticks(range(1, 6), [f"Q{i}" for i in range(1, 6)])
            ax.set_xlabel(f"{role.value} reservation quintile")
            ax.set_ylabel("surplus share")
            ax.set_title(f"{role.value} surplus by value quintile (gft)")
            ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / "quintile_surplus.png"
        fig.savefig(path, dpi=120, metadata=_FIG_METADATA)
        plt.close(fig)
        out["quintile_surplus"] = path
    return out
