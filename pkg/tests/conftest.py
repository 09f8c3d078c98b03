import os
import sys
import math

import numpy as np
import pytest

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if ROOT not in sys.path:
    sys.path.insert(0, ROOT)

from grid_case import (Bus, Branch, Generator, Load, GridCase, load_case, validate_case,
                       default_shed_cost)

CASES = os.path.join(ROOT, 'cases')


def case_path(name: str) -> str:
    return os.path.join(CASES, name)


def build_random_case(rng: np.random.Generator, n_bus: int, radial: bool = True, lossless: bool = False,
                      n_gen: int = 2, s_max: float = 10.0, name: str = 'random') -> GridCase:
    """Connected random network with distinct linear costs and enough capacity for its load."""
    buses = tuple(Bus(bus_id=i + 1, kind=3 if i == 0 else 1, gs=0.0, bs=0.0, vm_min=0.9, vm_max=1.1)
                  for i in range(n_bus))

    edges = [(int(rng.integers(0, i)), i) for i in range(1, n_bus)]
    if not radial:
        for _ in range(max(1, n_bus // 3)):
            i, j = sorted(rng.choice(n_bus, size=2, replace=False).tolist())
            if (i, j) not in edges:
                edges.append((i, j))
    branches = []
    for f, t in edges:
        x = rng.uniform(0.05, 0.25)
        r = 0.0 if lossless else rng.uniform(0.05, 0.2) * x
        b_charge = 0.0 if lossless else rng.uniform(0.0, 0.04)
        branches.append(Branch(from_bus=f, to_bus=t, r=r, x=x, b_charge=b_charge, s_max=s_max,
                               dva_min=-math.pi / 6, dva_max=math.pi / 6))

    load_buses = [i for i in range(1, n_bus) if rng.random() < 0.7] or [n_bus - 1]
    loads = []
    for i in load_buses:
        pd = rng.uniform(0.1, 0.5)
        loads.append(Load(bus=i, pd_ref=pd, qd_ref=0.2 * pd))
    total = sum(ld.pd_ref for ld in loads)

    gen_buses = [0] + rng.choice(np.arange(1, n_bus), size=min(n_gen, n_bus) - 1, replace=False).tolist()
    costs = np.sort(rng.uniform(10.0, 50.0, size=len(gen_buses)))
    generators = []
    for k, (bus, cost) in enumerate(zip(gen_buses, costs)):
        # the cheapest unit cannot cover the load alone, so a second unit is marginal
        pg_max = 0.6 * total if k == 0 else 1.5 * total
        generators.append(Generator(bus=int(bus), pg_min=0.0, pg_max=pg_max, qg_min=-3.0, qg_max=3.0,
                                    cost=float(cost)))

    case = GridCase(name=name, base_mva=100.0, buses=buses, branches=tuple(branches),
                    generators=tuple(generators), loads=tuple(loads), ref_bus=0,
                    shed_cost=default_shed_cost(generators))
    return validate_case(case)


@pytest.fixture
def case2():
    return load_case(case_path('case2.m'))


@pytest.fixture
def case2_lossy():
    return load_case(case_path('case2_lossy.m'))


@pytest.fixture
def case14():
    return load_case(case_path('case14_linear.m'))


@pytest.fixture
def random_case():
    return build_random_case
