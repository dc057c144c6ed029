"""Self-contained CMA-ES used as an independent optimizer oracle.

Transcribed directly from the published strategy-parameter defaults
(tutorial pseudocode), with stdlib `random` for sampling and its own
state layout.  Shares no code with the package under test; agreement
between the two on benchmark functions is evidence, not tautology.
"""

from __future__ import annotations

import math
import random

import numpy as np


class ReferenceCma:
    def __init__(self, x0, sigma0: float, lam: int, mu: int, seed: int):
        self.n = len(x0)
        self.xmean = np.array(x0, dtype=float)
        self.sigma = float(sigma0)
        self.lam = lam
        self.mu = mu
        w = np.array([math.log(mu + 0.5) - math.log(i + 1) for i in range(mu)])
        self.w = w / w.sum()
        self.mueff = 1.0 / float(np.sum(self.w**2))
        n, mueff = self.n, self.mueff
        self.cs = (mueff + 2) / (n + mueff + 5)
        self.ds = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + self.cs
        self.cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.c1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.cmu = min(
            1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff)
        )
        self.chin = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.gen = 0
        self.rng = random.Random(seed)
        self.best_x = None
        self.best_f = math.inf

    def ask(self) -> list[np.ndarray]:
        evals, B = np.linalg.eigh((self.C + self.C.T) / 2.0)
        evals = np.maximum(evals, 0.0)
        self._B = B
        self._D = np.sqrt(evals)
        out = []
        for _ in range(self.lam):
            z = np.array([self.rng.gauss(0.0, 1.0) for _ in range(self.n)])
            out.append(self.xmean + self.sigma * (self._B @ (self._D * z)))
        return out

    def tell(self, xs: list[np.ndarray], fs: list[float]) -> None:
        order = np.argsort(np.asarray(fs), kind="stable")
        if fs[order[0]] < self.best_f:
            self.best_f = float(fs[order[0]])
            self.best_x = np.array(xs[order[0]])
        sel = np.array([xs[i] for i in order[: self.mu]])
        y = (sel - self.xmean) / self.sigma
        yw = self.w @ y
        self.xmean = self.xmean + self.sigma * yw
        dinv = np.where(self._D > 0, 1.0 / np.maximum(self._D, 1e-300), 0.0)
        invsqrt = (self._B * dinv) @ self._B.T
        self.gen += 1
        self.ps = (1 - self.cs) * self.ps + math.sqrt(
            self.cs * (2 - self.cs) * self.mueff
        ) * (invsqrt @ yw)
        hsig = float(
            np.linalg.norm(self.ps)
            / math.sqrt(1 - (1 - self.cs) ** (2 * self.gen))
            / self.chin
            < 1.4 + 2 / (self.n + 1)
        )
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(
            self.cc * (2 - self.cc) * self.mueff
        ) * yw
        self.C = (
            (1 - self.c1 - self.cmu) * self.C
            + self.c1
            * (
                np.outer(self.pc, self.pc)
                + (1 - hsig) * self.cc * (2 - self.cc) * self.C
            )
            + self.cmu * (y.T * self.w) @ y
        )
        self.sigma = self.sigma * math.exp(
            (self.cs / self.ds) * (np.linalg.norm(self.ps) / self.chin - 1)
        )


def minimize(f, x0, sigma0, lam, mu, seed, generations):
    """Run the reference strategy; returns (final mean, best f, best x)."""
    es = ReferenceCma(x0, sigma0, lam, mu, seed)
    for _ in range(generations):
        xs = es.ask()
        es.tell(xs, [float(f(x)) for x in xs])
    return es.xmean, es.best_f, es.best_x
