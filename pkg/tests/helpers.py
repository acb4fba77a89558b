"""Shared hypothesis strategies and small builders for the test suite."""

import random

from hypothesis import strategies as st

from mllm_cvrp.core import Customer, Instance, RoundingMode, Solution


class ScriptedTransport:
    """Canned responses, in order.  Driving a ChatSession through this
    produces a transcript whose hashes match the real prompt construction,
    ready for replay tests."""

    def __init__(self, responses):
        self.responses = list(responses)
        self.sent = []

    def complete(self, config, messages):
        if not self.responses:
            raise AssertionError("scripted transport exhausted")
        self.sent.append(messages[-1])
        return self.responses.pop(0), {"prompt_tokens": 1, "completion_tokens": 1}


def make_instance(coords, demands, capacity=100, fleet_size=2, name="synthetic",
                  depot=(0, 0), rounding=RoundingMode.ROUNDED):
    customers = tuple(
        Customer(id=i + 1, x=x, y=y, demand=d)
        for i, ((x, y), d) in enumerate(zip(coords, demands))
    )
    return Instance(name=name, depot=depot, customers=customers,
                    capacity=capacity, fleet_size=fleet_size, rounding=rounding)


coord = st.integers(min_value=0, max_value=1000)


@st.composite
def instances(draw, min_customers=1, max_customers=40, rounding=RoundingMode.ROUNDED):
    n = draw(st.integers(min_customers, max_customers))
    pts = draw(
        st.lists(st.tuples(coord, coord), min_size=n + 1, max_size=n + 1)
    )
    capacity = draw(st.integers(10, 200))
    demands = draw(
        st.lists(st.integers(0, capacity), min_size=n, max_size=n)
    )
    fleet = max(1, -(-sum(demands) // capacity))
    return make_instance(pts[1:], demands, capacity=capacity, fleet_size=fleet,
                         depot=pts[0], rounding=rounding)


@st.composite
def partitions(draw, instance):
    """A valid-ID solution: some permutation of 1..n split into routes."""
    ids = list(range(1, instance.n_customers + 1))
    ids = draw(st.permutations(ids))
    routes, i = [], 0
    while i < len(ids):
        step = draw(st.integers(1, len(ids) - i))
        routes.append(ids[i:i + step])
        i += step
    return Solution(routes=tuple(map(tuple, routes)))


@st.composite
def candidates(draw, max_id=20, max_routes=6):
    """Arbitrary (often invalid) solutions: dupes, aliens, empty routes."""
    routes = draw(st.lists(st.lists(st.integers(0, max_id), max_size=8),
                           max_size=max_routes))
    return Solution(routes=tuple(map(tuple, routes)))


def mutate(solution: Solution, n_customers: int, rng: random.Random) -> Solution:
    """Drop/duplicate/inject IDs at random — the invalid-candidate mill."""
    routes = [list(r) for r in solution.routes]
    for _ in range(rng.randint(1, 4)):
        op = rng.choice(("drop", "dup", "inject"))
        flat = [(i, j) for i, r in enumerate(routes) for j in range(len(r))]
        if op == "drop" and flat:
            i, j = rng.choice(flat)
            del routes[i][j]
        elif op == "dup" and flat:
            i, j = rng.choice(flat)
            t = rng.randrange(len(routes))
            routes[t].insert(rng.randint(0, len(routes[t])), routes[i][j])
        elif op == "inject":
            t = rng.randrange(len(routes))
            alien = rng.choice(
                [0, n_customers + 1, n_customers + rng.randint(1, 9)])
            routes[t].insert(rng.randint(0, len(routes[t])), alien)
    return Solution(routes=tuple(tuple(r) for r in routes))


def random_partition(instance, rng: random.Random):
    """Plain-random counterpart of partitions() for non-hypothesis loops."""
    ids = list(range(1, instance.n_customers + 1))
    rng.shuffle(ids)
    routes, i = [], 0
    while i < len(ids):
        step = rng.randint(1, len(ids) - i)
        routes.append(tuple(ids[i:i + step]))
        i += step
    return Solution(routes=tuple(routes))
