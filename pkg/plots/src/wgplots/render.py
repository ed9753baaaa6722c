"""Figure renderers: ECDF, Taylor diagram, Laplacian heatmap, HPO swarm.

Rendering is deterministic: a fixed style seed drives the swarm jitter, the
SVG hash salt is pinned and date metadata is stripped, so identical inputs
yield byte-identical images.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .manifest import (
    PlotManifest, SchemaMismatch, load_laplacian, load_manifest, load_report,
    load_swarm,
)

STYLE_SEED = 1234
SCHEME_ORDER = ("binary", "weighted", "logarithmic")

matplotlib.rcParams["svg.hashsalt"] = "wgplots"


def build_ecdf_figure(report: dict, style: dict):
    values = np.asarray(report["ecdf"]["values"], dtype=float)
    fractions = np.asarray(report["ecdf"]["fractions"], dtype=float)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(values, fractions, where="post", lw=1.5)
    if style.get("logx"):
        positive = values > 0
        if positive.any():
            ax.set_xscale("log")
    ax.set_xlabel("relative error of the nodal pressure")
    ax.set_ylabel("cumulative fraction of nodes")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.set_title(style.get("title", "Relative error ECDF"))
    fig.tight_layout()
    return fig, ax


def build_taylor_figure(report: dict, style: dict):
    fig = plt.figure(figsize=(5.5, 5.5))
    ax = fig.add_subplot(projection="polar")
    ax.set_thetamin(0)
    ax.set_thetamax(90)
    corr_ticks = np.array([0.0, 0.2, 0.4, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0])
    ax.set_xticks(np.arccos(corr_ticks))
    ax.set_xticklabels([f"{c:g}" for c in corr_ticks])
    rmax = style.get("rmax", 1.6)
    ax.set_rmax(rmax)

    # centered-RMSE contours around the reference (1, corr=1)
    theta = np.linspace(0.0, np.pi / 2.0, 181)
    radius = np.linspace(0.0, rmax, 121)
    tt, rr = np.meshgrid(theta, radius)
    crmse = np.sqrt(np.maximum(1.0 + rr ** 2 - 2.0 * rr * np.cos(tt), 0.0))
    contours = ax.contour(tt, rr, crmse, levels=[0.25, 0.5, 0.75, 1.0, 1.25],
                          colors="grey", linewidths=0.6, linestyles="dotted")
    ax.clabel(contours, fmt="%.2f", fontsize=7)

    def place(stats, marker, label, color):
        theta_pt = np.arccos(np.clip(stats["correlation"], -1.0, 1.0))
        ax.plot([theta_pt], [stats["normalized_std"]], marker=marker, ls="",
                ms=8, color=color, label=label)

    place(report["taylor"], "o", "model", "tab:blue")
    place(report["baseline_taylor"], "s", "naive baseline", "tab:orange")
    ax.plot([0.0], [1.0], marker="x", ls="", ms=10, mew=2.5, color="red",
            label="reference")
    ax.set_title(style.get("title", "Taylor diagram"), pad=18)
    ax.legend(loc="upper right", bbox_to_anchor=(1.25, 1.1), fontsize=8)
    fig.tight_layout()
    return fig, ax


def build_laplacian_figure(matrix: np.ndarray, header: dict, style: dict):
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    vmax = np.abs(matrix).max()
    image = ax.imshow(matrix, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    fig.colorbar(image, ax=ax, shrink=0.85)
    ax.set_title(style.get(
        "title",
        f"scaled Laplacian, {header['scheme']} weighting "
        f"(lambda_max = {header['lambda_max']:.3f})"))
    ax.set_xlabel("node index")
    ax.set_ylabel("node index")
    fig.tight_layout()
    return fig, ax


def build_swarm_figure(rows: list[dict], style: dict):
    rng = np.random.default_rng(STYLE_SEED)
    schemes = [s for s in SCHEME_ORDER if any(r["scheme"] == s for r in rows)]
    schemes += sorted({r["scheme"] for r in rows} - set(schemes))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    per_scheme = {s: [r["val_loss"] for r in rows if r["scheme"] == s
                      and np.isfinite(r["val_loss"])] for s in schemes}
    positions = list(range(len(schemes)))
    finite = [per_scheme[s] for s in schemes]
    if all(len(v) > 0 for v in finite):
        violins = ax.violinplot(finite, positions=positions, widths=0.8,
                                showextrema=False)
        for body in violins["bodies"]:
            body.set_alpha(0.15)
            body.set_facecolor("grey")
    layer_colors = {2: "tab:blue", 3: "tab:green", 4: "tab:red"}
    seen_layers = set()
    for row in rows:
        if not np.isfinite(row["val_loss"]):
            continue
        x = schemes.index(row["scheme"]) + rng.uniform(-0.25, 0.25)
        n_layers = row["n_layers"]
        label = None
        if n_layers not in seen_layers:
            seen_layers.add(n_layers)
            label = f"{n_layers} layers"
        ax.plot([x], [row["val_loss"]], "o", ms=4, alpha=0.8,
                color=layer_colors.get(n_layers, "tab:purple"), label=label)
    ax.set_yscale("log")
    ax.set_xticks(positions)
    ax.set_xticklabels(schemes)
    ax.set_ylabel("validation loss")
    ax.set_title(style.get("title", "Hyperparameter search by weighting scheme"))
    handles, labels = ax.get_legend_handles_labels()
    order = np.argsort(labels)
    ax.legend([handles[i] for i in order], [labels[i] for i in order], fontsize=8)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return fig, ax


def build_figure(manifest: PlotManifest):
    if manifest.kind == "ecdf":
        return build_ecdf_figure(load_report(manifest.inputs["report"]),
                                 manifest.style)
    if manifest.kind == "taylor":
        return build_taylor_figure(load_report(manifest.inputs["report"]),
                                   manifest.style)
    if manifest.kind == "laplacian":
        matrix, header = load_laplacian(manifest.inputs["matrix_csv"],
                                        manifest.inputs["header_json"])
        return build_laplacian_figure(matrix, header, manifest.style)
    if manifest.kind == "swarm":
        return build_swarm_figure(load_swarm(manifest.inputs["swarm_csv"]),
                                  manifest.style)
    raise SchemaMismatch(f"manifest.kind: unknown figure kind {manifest.kind!r}")


def render(manifest_path) -> list:
    """Render one manifest to its PNG and SVG targets; returns written paths."""
    manifest = load_manifest(manifest_path)
    fig, _ = build_figure(manifest)
    written = []
    for path, fmt in ((manifest.output_png, "png"), (manifest.output_svg, "svg")):
        path.parent.mkdir(parents=True, exist_ok=True)
        metadata = {"Date": None} if fmt == "svg" else None
        fig.savefig(path, format=fmt, dpi=manifest.style.get("dpi", 150),
                    metadata=metadata)
        written.append(path)
    plt.close(fig)
    return written
