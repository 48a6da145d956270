# diagnostics/reports.py
# signed term ledgers for the weak energy identities
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from core.checks import CheckReport

LHS = 'lhs'
RHS = 'rhs'
# reported alongside an identity, not part of it
INFO = 'info'

REPORT_COLUMNS = ('term', 'value', 'side', 'nonnegative_min')


@dataclass(frozen=True)
class Term:
    name: str
    value: float
    side: str = LHS
    # scaled cellwise minimum for terms that must be nonnegative
    nonnegative_min: Optional[float] = None


@dataclass
class DissipationReport(CheckReport):
    terms: list = field(default_factory=list)

    def add_term(self, name, value, side=LHS, nonnegative_min=None):
        self.terms.append(Term(name, float(value), side,
                               None if nonnegative_min is None else float(nonnegative_min)))
        return self.terms[-1]

    def term(self, name):
        for term in self.terms:
            if term.name == name:
                return term.value
        raise KeyError(name)

    @property
    def lhs(self):
        return math.fsum(t.value for t in self.terms if t.side == LHS)

    @property
    def rhs(self):
        return math.fsum(t.value for t in self.terms if t.side == RHS)

    @property
    def residual(self):
        return self.lhs - self.rhs

    @property
    def scale(self):
        """Largest term of the identity in absolute value."""
        return max((abs(t.value) for t in self.terms if t.side != INFO), default=0.0)

    @property
    def normalized_residual(self):
        if self.scale == 0:
            return abs(self.residual)
        return abs(self.residual) / self.scale

    def term_rows(self):
        return [
            {
                'term': t.name,
                'value': repr(t.value),
                'side': t.side,
                'nonnegative_min': '' if t.nonnegative_min is None else repr(t.nonnegative_min),
            }
            for t in self.terms
        ]

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as handle:
            writer = csv.DictWriter(handle, fieldnames=REPORT_COLUMNS, lineterminator='\n')
            writer.writeheader()
            writer.writerows(self.term_rows())
            writer.writerow({'term': 'residual', 'value': repr(self.residual), 'side': INFO,
                             'nonnegative_min': ''})
        return path

    def summary(self):
        lines = [super().summary()]
        for t in self.terms:
            floor = '' if t.nonnegative_min is None else f"  min {t.nonnegative_min:.3g}"
            lines.append(f"    {t.side:4s} {t.name:28s} {t.value: .10e}{floor}")
        if self.terms:
            lines.append(f"    residual {self.residual: .6e} (normalized {self.normalized_residual:.3e})")
        return "\n".join(lines)
