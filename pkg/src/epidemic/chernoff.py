"""Poisson tail bounds checked against the exact distribution."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import stats


@dataclass(frozen=True)
class ChernoffCheck:
    lam: float
    eps: float
    lower_bound: float
    upper_bound: float
    lower_exact: float
    upper_exact: float

    @property
    def holds(self) -> bool:
        return self.lower_exact < self.lower_bound and self.upper_exact < self.upper_bound


def chernoff_poisson(lam: float, eps: float) -> ChernoffCheck:
    """Bounds exp(-lam eps^2 / 2) on P[P < (1-eps) lam] and exp(-lam eps^2 / 4) on P[P > (1+eps) lam].

    The exact tails come from the Poisson(lam) distribution.
    """
    if lam <= 0:
        raise ValueError(f"lam must be > 0, got {lam}")
    if not 0 < eps < 1:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    dist = stats.poisson(lam)
    # P[P < a] = cdf(ceil(a) - 1); P[P > b] = sf(floor(b))
    lower_exact = float(dist.cdf(math.ceil((1 - eps) * lam) - 1))
    upper_exact = float(dist.sf(math.floor((1 + eps) * lam)))
    return ChernoffCheck(
        lam=lam,
        eps=eps,
        lower_bound=math.exp(-lam * eps**2 / 2),
        upper_bound=math.exp(-lam * eps**2 / 4),
        lower_exact=lower_exact,
        upper_exact=upper_exact,
    )


def chernoff_grid(lams, epss) -> list[ChernoffCheck]:
    return [chernoff_poisson(lam, eps) for lam in lams for eps in epss]
