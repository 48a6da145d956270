import numpy as np

from .functions import INF, tabulate

CSV_HEADER = 'a,f,inf_subdiff,sup_subdiff'


def function_table(f, nodes=None):
    """Rows (a, f(a), inf df(a), sup df(a)) on ``nodes`` (the tabulation grid by default)."""
    if nodes is None:
        nodes = getattr(f, 'nodes', None)
        if nodes is None:
            raise ValueError(f"{f.name} is closed form; pass the sample nodes explicitly")
    nodes = np.asarray(nodes, dtype=float)
    lo, hi = f.subdiff_bounds(nodes)
    return np.column_stack([nodes, f.value_at(nodes), lo, hi])


def write_function_csv(f, path, nodes=None):
    np.savetxt(path, function_table(f, nodes), delimiter=',', header=CSV_HEADER,
               comments='', fmt='%.17g')
    return path


def read_function_csv(path, name=None):
    """Load a table back as a TabulatedFunction (slopes: minimal finite selection)."""
    data = np.loadtxt(path, delimiter=',', skiprows=1, ndmin=2)
    nodes, values, lo, hi = data.T
    slopes = np.where(np.isfinite(lo), lo, hi)
    domain = {}
    if lo[0] == -INF:
        domain.update(domain_lo=float(nodes[0]), lo_closed=True)
    if hi[-1] == INF:
        domain.update(domain_hi=float(nodes[-1]), hi_closed=True)
    return tabulate(name or str(path), nodes, values, slopes, **domain)
