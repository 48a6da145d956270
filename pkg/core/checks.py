from dataclasses import dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Check:
    """One pass/fail condition: a measured value compared against a bound."""
    name: str
    passed: bool
    value: float
    bound: Optional[float] = None
    detail: str = ''

    @property
    def margin(self):
        if self.bound is None:
            return None
        return self.bound - self.value


@dataclass
class CheckReport:
    """Named list of checks; failures are entries, never exceptions."""
    name: str
    checks: list = field(default_factory=list)
    advisory: bool = False
    metadata: dict = field(default_factory=dict)

    def add(self, name, passed, value, bound=None, detail=''):
        self.checks.append(Check(name, bool(passed), float(value),
                                 None if bound is None else float(bound), detail))
        return self.checks[-1]

    def extend(self, other):
        self.checks.extend(other.checks)

    def get(self, name):
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    @property
    def passed(self):
        # advisory reports never fail a run
        return self.advisory or all(check.passed for check in self.checks)

    @property
    def failures(self):
        return [check for check in self.checks if not check.passed]

    def to_rows(self):
        return [
            {
                'check': check.name,
                'passed': check.passed,
                'value': check.value,
                'bound': '' if check.bound is None else check.bound,
                'detail': check.detail,
            }
            for check in self.checks
        ]

    def summary(self):
        status = 'ADVISORY' if self.advisory else ('PASS' if self.passed else 'FAIL')
        lines = [f"{self.name}: {status}"]
        for check in self.checks:
            mark = 'ok ' if check.passed else 'BAD'
            bound = '' if check.bound is None else f" (bound {check.bound:.6g})"
            lines.append(f"  [{mark}] {check.name} = {check.value:.6g}{bound} {check.detail}".rstrip())
        return "\n".join(lines)
