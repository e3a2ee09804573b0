"""Optional figures for finished runs (needs matplotlib; only the CLI report uses it)."""
from __future__ import annotations

from pathlib import Path

from .experiments import RunManifest, read_table


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _cols(header, rows):
    out = {h: [] for h in header}
    for r in rows:
        for h, x in zip(header, r):
            out[h].append(x)
    return out


def _num(xs):
    return [float(x) for x in xs]


def render(manifest: RunManifest, out_dir=None) -> list[Path]:
    """Write one PNG per output table; returns the written paths."""
    plt = _plt()
    out = Path(out_dir) if out_dir else manifest.directory / "figures"
    out.mkdir(parents=True, exist_ok=True)
    exp = manifest.config.get("experiment")
    paths = []
    for entry in manifest.outputs:
        header, rows = read_table(manifest, entry)
        c = _cols(header, rows)
        fig, ax = plt.subplots(figsize=(6, 4))
        if exp == "furstenberg":
            for fam in sorted(set(c["family"])):
                idx = [i for i, f in enumerate(c["family"]) if f == fam]
                ax.errorbar([float(c["steps"][i]) for i in idx], [float(c["lyapunov"][i]) for i in idx],
                            yerr=[float(c["stderr"][i]) for i in idx], marker="o", label=fam)
            ax.set_xscale("log")
            ax.set_xlabel("steps")
            ax.set_ylabel("top Lyapunov exponent")
        elif exp == "cauchy-table":
            x = range(len(rows))
            ax.errorbar(x, _num(c["measured"]), yerr=_num(c["stderr"]), fmt="o", label="coupling upper bound")
            ax.plot(x, _num(c["bound"]), "k_", markersize=20, label="certified bound")
            ax.set_xticks(list(x), [f"({k},{l})" for k, l in zip(c["k"], c["l"])])
            ax.set_ylabel("f-bar")
        elif exp == "zero-exponent-path":
            for lev in sorted(set(c["level"])):
                idx = [i for i, v in enumerate(c["level"]) if v == lev]
                ax.plot([float(c["entropy"][i]) for i in idx], [float(c["exponent"][i]) for i in idx],
                        "o-", label=f"level {lev}")
            ax.set_xlabel("entropy")
            ax.set_ylabel("fiber exponent")
        elif exp == "lln":
            ax.bar(range(len(rows)), _num(c["good_mass"]))
            delta = float(manifest.config["params"]["delta"])
            ax.axhline(1 - delta, color="k", linestyle="--", label="1 - delta")
            ax.set_ylim(min(_num(c["good_mass"]) + [1 - delta]) - 0.02, 1.0)
            ax.set_xlabel("vector")
            ax.set_ylabel("good-set mass")
        ax.legend(loc="best", fontsize=8)
        ax.set_title(f"{exp}: {entry['path']}")
        fig.tight_layout()
        path = out / (Path(entry["path"]).stem + ".png")
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths
