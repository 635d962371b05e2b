import matplotlib.pyplot as plt
import seaborn as sns

sns.set(style="whitegrid")

# one color per signal component; cycles when a signal has more components
colors = {
    "component": ["#2979FF", "#FF7043", "#66BB6A", "#AB47BC", "#FFA726"],
    "window": "#90CAF9",
    "delay": "#000000",
}


def component_color(i: int) -> str:
    palette = colors["component"]
    return palette[i % len(palette)]


def savefig(path):
    plt.tight_layout()
    plt.savefig(path, dpi=200)
    plt.close()
