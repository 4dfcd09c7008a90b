"""Seeded random networks, domains and instances shared across the tests."""

from __future__ import annotations

import numpy as np

from boxplain.model import IDENTITY, RELU, InputDomain, Layer, Network, forward


def random_network(rng: np.random.Generator, n_inputs=None, n_classes=None,
                   depth=None, max_hidden_total=12) -> tuple[Network, InputDomain]:
    """Small ReLU classifier with a unit-box domain.

    Sizes stay within 2-10 inputs, 1-3 hidden layers and at most
    ``max_hidden_total`` hidden neurons so the enumeration oracle stays cheap.
    """
    n_inputs = int(rng.integers(2, 11)) if n_inputs is None else n_inputs
    depth = int(rng.integers(1, 4)) if depth is None else depth
    n_classes = int(rng.integers(2, 4)) if n_classes is None else n_classes
    widths = []
    remaining = max_hidden_total
    for _ in range(depth):
        if remaining < 2:
            break
        w = int(rng.integers(2, min(5, remaining + 1)))
        widths.append(w)
        remaining -= w
    layers = []
    prev = n_inputs
    for w in widths:
        weights = rng.normal(0.0, 1.0, size=(w, prev)) / np.sqrt(prev)
        biases = rng.normal(0.0, 0.3, size=w)
        layers.append(Layer(weights, biases, RELU))
        prev = w
    weights = rng.normal(0.0, 1.0, size=(n_classes, prev)) / np.sqrt(prev)
    biases = rng.normal(0.0, 0.3, size=n_classes)
    layers.append(Layer(weights, biases, IDENTITY))
    net = Network(tuple(layers), n_inputs)
    domain = InputDomain(np.zeros(n_inputs), np.ones(n_inputs))
    return net, domain


def random_instance(rng: np.random.Generator, net: Network,
                    domain: InputDomain) -> np.ndarray:
    """In-domain point whose prediction is not an exact tie."""
    while True:
        point = rng.uniform(domain.lows, domain.highs)
        outputs = forward(net, point).outputs
        top = np.sort(outputs)
        if top[-1] != top[-2]:
            return point
