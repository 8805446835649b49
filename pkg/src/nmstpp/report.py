"""Verification artifacts: loss tables, mean-probability confusion matrices,
interevent-time CDF comparison and attention heatmaps."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp

from .artifacts import Provenance, staged, write_csv
from .features import ACTION_NAMES, Action, N_ACTIONS, N_ZONES, WindowSet
from .model import NMSTPP, ForecastOutput, predict_distribution
from .train import LossBreakdown, loss, predict


@dataclass
class ConfusionSummary:
    """Row i is the mean predicted PMF over samples whose true class is i + 1.

    Rows for classes absent from the sample are NaN and ``present`` is False.
    ``accuracy`` is the diagonal.
    """

    matrix: np.ndarray
    present: np.ndarray
    counts: np.ndarray

    @property
    def accuracy(self) -> np.ndarray:
        return np.diag(self.matrix)


def confusion(pmfs: np.ndarray, truth, k: int) -> ConfusionSummary:
    truth = np.asarray(truth) - 1
    matrix = np.full((k, k), np.nan)
    counts = np.bincount(truth, minlength=k)
    for i in range(k):
        if counts[i]:
            matrix[i] = pmfs[truth == i].mean(axis=0)
    return ConfusionSummary(matrix, counts > 0, counts)


@dataclass
class CdfComparison:
    predicted: np.ndarray
    true: np.ndarray
    ks: float


def cdf_compare(predicted, true) -> CdfComparison:
    predicted = np.sort(np.asarray(predicted, dtype=np.float64))
    true = np.sort(np.asarray(true, dtype=np.float64))
    if not len(predicted) or not len(true):
        raise ValueError("both samples must be non-empty")
    # only the statistic is used; the asymptotic p-value divides by zero for singleton samples
    with np.errstate(divide="ignore"):
        ks = ks_2samp(predicted, true, method="asymp").statistic
    return CdfComparison(predicted, true, float(ks))


def export_attention(traces) -> np.ndarray:
    """Mean of the last attention row over (n, seqlen, seqlen) traces."""
    traces = np.asarray(traces, dtype=np.float64)
    if traces.ndim == 2:
        traces = traces[None]
    if not len(traces):
        raise ValueError("no attention traces")
    return traces[:, -1, :].mean(axis=0)


@dataclass
class Evaluation:
    loss: LossBreakdown
    zone: ConfusionSummary
    action: ConfusionSummary
    t_pred: np.ndarray
    t_true: np.ndarray
    attention: np.ndarray | None = None


def evaluate(scorer, windows: WindowSet, weights=None, time_weight: float = 10.0, attention_sample: int | None = None) -> Evaluation:
    """Score an NMSTPP model or a fitted baseline on one split.

    ``t_pred``/``t_true`` are in the scaled units of the windows; negative
    predictions are floored at 0 for the CDF only.
    """
    if len(windows) == 0:
        raise ValueError("empty split")
    attn = None
    if isinstance(scorer, NMSTPP):
        out, attn_t = predict(scorer, windows)
        attn = attn_t.double().numpy()
        if attention_sample:
            attn = attn[:attention_sample]
    else:
        out = scorer.forecast(windows)
    lb = loss(out, windows.target_t, windows.target_zone, windows.target_action, weights, time_weight)
    t_hat, zp, mp = predict_distribution(ForecastOutput(*out))
    return Evaluation(
        lb,
        confusion(zp, windows.target_zone, N_ZONES),
        confusion(mp, windows.target_action, N_ACTIONS),
        np.maximum(t_hat, 0.0),
        np.asarray(windows.target_t, dtype=np.float64),
        attn,
    )


LOSS_HEADER = ("model", "split", "total", "rmse_t", "cel_zone", "cel_action")


def _plot_setup():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "nmstpp"
    return plt


def _save_svg(fig, path: Path) -> None:
    with staged(path, "wb") as fh:
        fig.savefig(fh, format="svg", metadata={"Date": None})


def plot_confusion(cs: ConfusionSummary, labels, title: str, path: Path) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(6, 5))
    im = ax.imshow(np.nan_to_num(cs.matrix), vmin=0, vmax=1, cmap="Blues")
    ax.set_xticks(range(len(labels)), labels, rotation=90, fontsize=7)
    ax.set_yticks(range(len(labels)), labels, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(title)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_cdf(cmp: CdfComparison, path: Path) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(5, 4))
    for data, label in ((cmp.true, "true"), (cmp.predicted, "predicted")):
        ax.step(data, np.arange(1, len(data) + 1) / len(data), where="post", label=label)
    ax.set_xlabel("interevent time (scaled)")
    ax.set_ylabel("CDF")
    ax.set_title(f"KS = {cmp.ks:.3f}")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_attention(row: np.ndarray, path: Path) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(8, 1.8))
    im = ax.imshow(row[None, :], aspect="auto", cmap="viridis")
    ax.set_yticks([])
    ax.set_xlabel("history position (oldest to newest)")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def cdf_rows(cmp: CdfComparison, points: int = 101):
    grid = np.quantile(np.concatenate([cmp.predicted, cmp.true]), np.linspace(0, 1, points))
    for x in grid:
        yield {
            "t": float(x),
            "cdf_predicted": float(np.searchsorted(cmp.predicted, x, side="right") / len(cmp.predicted)),
            "cdf_true": float(np.searchsorted(cmp.true, x, side="right") / len(cmp.true)),
        }


def write_evaluation(ev: Evaluation, out_dir, prov: Provenance, name: str = "nmstpp", split: str = "test", plots: bool = True) -> None:
    out = Path(out_dir)
    write_csv(out / "loss.csv", LOSS_HEADER, [(name, split, ev.loss.total, ev.loss.rmse_t, ev.loss.cel_zone, ev.loss.cel_action)], prov)
    zone_labels = [f"zone_{z}" for z in range(1, N_ZONES + 1)]
    action_labels = [ACTION_NAMES[a] for a in Action]
    for fname, cs, labels in (("confusion_zone", ev.zone, zone_labels), ("confusion_action", ev.action, action_labels)):
        rows = [
            [labels[i], int(cs.counts[i]), *(("" if np.isnan(v) else float(v)) for v in cs.matrix[i])]
            for i in range(len(labels))
        ]
        write_csv(out / f"{fname}.csv", ("true", "count", *labels), rows, prov)
        if plots:
            plot_confusion(cs, labels, fname.replace("_", " "), out / f"{fname}.svg")
    cmp = cdf_compare(ev.t_pred, ev.t_true)
    write_csv(out / "cdf.csv", ("t", "cdf_predicted", "cdf_true"), cdf_rows(cmp), prov)
    write_csv(out / "ks.csv", ("ks",), [(cmp.ks,)], prov)
    if plots:
        plot_cdf(cmp, out / "cdf.svg")
    if ev.attention is not None:
        row = export_attention(ev.attention)
        n = len(row)
        write_csv(out / "attention.csv", ("position", "weight"), [(f"i-{n - j}", float(w)) for j, w in enumerate(row)], prov)
        if plots:
            plot_attention(row, out / "attention.svg")


def plot_correlations(corr: np.ndarray, labels, path: Path) -> None:
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(5, 4.2))
    im = ax.imshow(corr, vmin=-1, vmax=1, cmap="RdBu_r")
    ax.set_xticks(range(len(labels)), labels, rotation=45)
    ax.set_yticks(range(len(labels)), labels)
    for i in range(len(labels)):
        for j in range(len(labels)):
            ax.text(j, i, f"{corr[i, j]:.2f}", ha="center", va="center", fontsize=8)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def plot_timeline(rows: list[dict], path: Path) -> None:
    plt = _plot_setup()
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for team in sorted({r["team"] for r in rows}):
        tr = [r for r in rows if r["team"] == team]
        minutes = [float(r["minute"]) for r in tr]
        for ax, key in zip(axes, ("cum_hpus", "cum_hpus_plus")):
            ax.step(minutes, [float(r[key]) for r in tr], where="post", label=team)
            for r in tr:
                if int(r["goals"]):
                    ax.axvline(float(r["minute"]), ls=":", lw=0.8, color="grey")
    axes[0].set_title("cumulative HPUS")
    axes[1].set_title("cumulative HPUS+")
    for ax in axes:
        ax.set_xlabel("minute")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def build_report(run_dir, out_dir, prov: Provenance, plots: bool = True, decay_rate: float = 0.3) -> list[dict]:
    """Collect loss tables into ``summary.csv`` and render metric figures."""
    from .artifacts import read_csv
    from .metrics import decay

    run, out = Path(run_dir), Path(out_dir)
    summary = []
    for path in sorted(run.glob("eval/**/loss.csv")):
        summary.extend(read_csv(path))
    write_csv(out / "summary.csv", LOSS_HEADER, summary, prov)
    x = np.arange(1, 16)
    write_csv(out / "decay.csv", ("x", "weight"), zip(x.tolist(), decay(x, decay_rate).tolist()), prov)
    if not plots:
        return summary
    plt = _plot_setup()
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(x, decay(x, decay_rate), marker="o")
    ax.set_xlabel("position from possession end")
    ax.set_ylabel("weight")
    fig.tight_layout()
    _save_svg(fig, out / "decay.svg")
    plt.close(fig)
    corr_path = run / "metrics" / "correlations.csv"
    if corr_path.exists():
        rows = read_csv(corr_path)
        labels = [r[""] for r in rows]
        plot_correlations(np.array([[float(r[c]) for c in labels] for r in rows]), labels, out / "correlations.svg")
    for path in sorted((run / "metrics").glob("timeline_*.csv")):
        plot_timeline(read_csv(path), out / path.with_suffix(".svg").name)
    return summary
