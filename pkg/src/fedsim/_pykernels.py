"""Pure-Python reference kernels.

``_ckernels.pyx`` mirrors these loop for loop; both must perform the same
floating-point operations in the same order so their results are
bit-identical.
"""
import math

import numpy as np


def path_totals(num, den):
    """Row sums of ``num / den`` accumulated left to right from 0.0."""
    num = np.ascontiguousarray(num, dtype=np.float64)
    den = np.ascontiguousarray(den, dtype=np.float64)
    if num.shape != den.shape or num.ndim != 2:
        raise ValueError("num and den must be 2-D arrays of the same shape")
    out = np.empty(num.shape[0], dtype=np.float64)
    for i, (nrow, drow) in enumerate(zip(num.tolist(), den.tolist())):
        acc = 0.0
        for n, d in zip(nrow, drow):
            acc += n / d
        out[i] = acc
    return out


def greedy_outsource(demand, capacity, price, budget, integral=False):
    """Serve locally up to capacity, outsource excess while the budget lasts.

    Returns ``(local, outsourced, cost, shortfall, total)``; the first four are
    per-slice arrays. ``total`` is the left-to-right sum of ``cost`` and is
    never above ``budget``.
    """
    demand = np.ascontiguousarray(demand, dtype=np.float64)
    capacity = np.ascontiguousarray(capacity, dtype=np.float64)
    n = demand.shape[0]
    if capacity.shape[0] != n:
        raise ValueError("demand and capacity lengths differ")
    price = float(price)
    budget = float(budget)
    local = np.empty(n)
    outs = np.empty(n)
    cost = np.empty(n)
    short = np.empty(n)
    total = 0.0
    for i, (d, c) in enumerate(zip(demand.tolist(), capacity.tolist())):
        loc = d if d < c else c
        excess = d - loc
        o = 0.0
        k = 0.0
        if excess > 0.0:
            if price > 0.0:
                afford = (budget - total) / price
                o = excess if excess < afford else afford
                if o < 0.0:
                    o = 0.0
            else:
                o = excess
            if integral:
                o = float(math.floor(o))
            k = o * price
            while o > 0.0 and total + k > budget:
                deficit = (total + k) - budget
                if integral:
                    step = float(math.ceil(deficit / price))
                    o = o - (step if step > 1.0 else 1.0)
                    if o < 0.0:
                        o = 0.0
                else:
                    o = math.nextafter(o - deficit / price, 0.0)
                    if o < 0.0:
                        o = 0.0
                k = o * price
        local[i] = loc
        outs[i] = o
        cost[i] = k
        short[i] = excess - o
        total += k
    return local, outs, cost, short, total
