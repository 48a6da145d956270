# experiments/plotting.py
# log-log convergence plots written as standalone, byte-stable SVG
import logging
from pathlib import Path

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)

# fixed ids and no timestamp: identical input gives identical bytes
SVG_RC = {
    'svg.hashsalt': 'growthlab',
    'svg.fonttype': 'none',
    'path.simplify': False,
}


def envelope(parameters, anchor, exponent):
    """c * x^exponent through ``anchor`` = (x0, y0)."""
    x0, y0 = anchor
    return [y0 * (x / x0) ** exponent for x in parameters]


def emit_svg(series, path, title='', xlabel='parameter', reference=None):
    """
    One log-log line per metric. ``series`` maps a metric name to
    (parameter, value) pairs; nonpositive values are left out since a log
    axis cannot show them. ``reference`` is an optional (label, exponent,
    metric) envelope anchored at that metric's largest-parameter point.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        drawn = 0
        for metric in sorted(series):
            pairs = sorted((p, v) for p, v in series[metric] if p > 0 and v > 0)
            if not pairs:
                logger.warning(f"{path.name}: nothing positive to plot for {metric}")
                continue
            ax.plot([p for p, _ in pairs], [v for _, v in pairs], marker='o', label=metric)
            drawn += 1
        if reference is not None:
            label, exponent, metric = reference
            pairs = sorted((p, v) for p, v in series.get(metric, []) if p > 0 and v > 0)
            if pairs:
                xs = [p for p, _ in pairs]
                ax.plot(xs, envelope(xs, pairs[-1], exponent), linestyle='--', color='gray', label=label)
                drawn += 1
        if drawn:
            ax.set_xscale('log')
            ax.set_yscale('log')
            ax.legend(loc='best')
        ax.set_xlabel(xlabel)
        ax.set_ylabel('error')
        ax.set_title(title)
        ax.grid(True, which='both', linewidth=0.3)
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
    return path
