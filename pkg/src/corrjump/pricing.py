"""Equity valuation as a European call on firm assets, by Fourier inversion.

The risk-neutral log asset value over tau days is

    ln V_T - ln V_t = (r - r*delta - a*lam - xi/2) * tau
                      + delta * ln(X_T / X_t) + W + (Q N(T) - compensator)

so its generating function factors into the common-factor part (the A/B
recursion evaluated at delta*phi), a Gaussian idiosyncratic part, and the
compound-Poisson jump MGF:

    g(phi) = V^phi * exp(phi*drift*tau + phi^2*xi*tau/2)
                   * exp(A(delta*phi) + B(delta*phi) * h_{t+1})
                   * exp(lam*tau*(exp(a*phi + b^2*phi^2/2) - 1))

The -xi/2 Ito term makes the collapsed model (delta = 0, lam = 0) exactly
lognormal with risk-neutral drift, i.e. Black-Scholes. The price is

    S = V/2 + (e^{-r tau}/pi) * I1 - D_t * (1/2 + I2/pi)

with I1, I2 the usual Gil-Pelaez integrals against g*(i*phi + 1) and
g*(i*phi), D_T = D_t * e^{r tau} (debt grows at the risk-free rate), and the
derivative dS/dV evaluated from the same node set. Everything is computed
with V normalized to 1 (the price is homogeneous of degree 1 in (V, D)), on
adaptive Gauss-Legendre panels that extend until the integrand tail falls
below the spec tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .common_factor import HNParams, ab_initial, to_risk_neutral
from .errors import DataError, InversionError, NumericalError

_PANEL_SEED = (0.0, 4.0, 8.0, 16.0, 32.0, 64.0)
_PANEL_STEP = 64.0


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre panel rule for the pricing integrals.

    ``max_phi`` is the truncation point before automatic extension kicks in;
    panels keep being appended (width ``64``) until the last two contribute
    less than ``rel_tol`` on the V-normalized scale, up to
    ``max_phi * 2**max_doublings``.
    """

    max_phi: float = 200.0
    nodes: int = 64
    scheme: str = "gauss-legendre"
    rel_tol: float = 1e-12
    max_doublings: int = 6

    def __post_init__(self):
        if self.max_phi <= 0:
            raise DataError("max_phi must be positive")
        if self.nodes < 64:
            raise DataError("need at least 64 nodes per panel")
        if self.scheme != "gauss-legendre":
            raise DataError(f"unknown quadrature scheme {self.scheme!r}")


@dataclass(frozen=True)
class PricingContext:
    """Everything Eq.-19-style pricing needs except the asset value itself.

    ``factor`` is the physical-measure common factor (the risk-neutral form
    is derived as needed), ``loading``/``xi`` the firm's structural
    parameters, (``jump_lam``, ``jump_mean``, ``jump_vol``) the firm's slice
    of the jump component, ``r`` the per-day rate, ``tau`` the maturity in
    trading days, ``h_next`` the factor variance state h_{t+1}, ``debt`` the
    current debt face D_t.
    """

    factor: HNParams
    loading: float
    xi: float
    jump_lam: float
    jump_mean: float
    jump_vol: float
    r: float
    tau: int
    h_next: float
    debt: float
    x_level: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise DataError("tau must be a positive number of days")
        if self.xi < 0:
            raise DataError("idiosyncratic variance must be non-negative")
        if self.h_next <= 0:
            raise DataError("h_next must be positive")
        if self.debt < 0:
            raise DataError("debt face must be non-negative")

    @property
    def debt_at_maturity(self) -> float:
        """D_T = D_t * e^{r tau} (footnote-15 growth convention)."""
        return self.debt * np.exp(self.r * self.tau)

    @property
    def drift(self) -> float:
        """Per-day risk-neutral log-asset drift, jump compensator included."""
        return (
            self.r * (1.0 - self.loading)
            - self.jump_mean * self.jump_lam
            - 0.5 * self.xi
        )


@lru_cache(maxsize=None)
def _gl_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = np.polynomial.legendre.leggauss(nodes)
    return xs, ws


def log_asset_gf_terms(ctx: PricingContext, z: np.ndarray, risk_neutral: bool = True):
    """(c0, c1) with log g(z) = z*ln(V) + c0(z) + c1(z)*h_next.

    The common-factor block is evaluated at argument loading*z; the flag
    switches the factor between its risk-neutral and physical dynamics.
    """
    z = np.asarray(z, dtype=complex)
    params = to_risk_neutral(ctx.factor) if risk_neutral else ctx.factor
    A, B = ab_initial(params, ctx.tau, ctx.loading * z, ctx.r)
    jump_exponent = ctx.jump_lam * ctx.tau * (
        np.exp(ctx.jump_mean * z + 0.5 * ctx.jump_vol**2 * z**2) - 1.0
    )
    c0 = A + z * ctx.drift * ctx.tau + 0.5 * z**2 * ctx.xi * ctx.tau + jump_exponent
    return c0, B


def asset_gf(ctx: PricingContext, value: float, phi, risk_neutral: bool = True):
    """Conditional generating function g(phi) = E_t[V_T^phi]."""
    if value <= 0:
        raise DataError("asset value must be positive")
    c0, c1 = log_asset_gf_terms(ctx, np.array([phi]), risk_neutral)
    out = np.exp(np.asarray(phi, dtype=complex) * np.log(value) + c0[0] + c1[0] * ctx.h_next)
    if not np.iscomplexobj(np.asarray(phi)):
        return out.real
    return out


class PricingKernel:
    """Per-(parameters, maturity) pricing engine, vectorized over days.

    Builds quadrature panels lazily: each panel's A/B recursion runs once and
    is reused by every price, delta, and Newton iteration that shares this
    kernel (the coefficients do not depend on V, D, or h).
    """

    def __init__(self, ctx: PricingContext, spec: QuadratureSpec):
        self.ctx = ctx
        self.spec = spec
        self.discount = float(np.exp(-ctx.r * ctx.tau))
        self.growth = float(np.exp(ctx.r * ctx.tau))
        self._edges = [0.0]
        self._panels: list[tuple[np.ndarray, ...]] = []
        self._max_edge = spec.max_phi * 2**spec.max_doublings

    def _next_edge(self, edge: float) -> float:
        for e in _PANEL_SEED[1:]:
            if e > edge + 1e-9:
                return e
        return edge + _PANEL_STEP

    def _panel(self, i: int):
        while len(self._panels) <= i:
            lo = self._edges[-1]
            hi = self._next_edge(lo)
            if hi > self._max_edge:
                raise NumericalError(
                    f"quadrature tail did not converge by phi = {lo:g} "
                    f"(max extension {self._max_edge:g}); integrand decays too slowly"
                )
            xs, ws = _gl_rule(self.spec.nodes)
            phi = 0.5 * (hi - lo) * xs + 0.5 * (hi + lo)
            w = 0.5 * (hi - lo) * ws
            k = phi.size
            both = np.concatenate([1j * phi, 1j * phi + 1.0])
            c0, c1 = log_asset_gf_terms(self.ctx, both, risk_neutral=True)
            self._panels.append((phi, w, c0[:k], c1[:k], c0[k:], c1[k:]))
            self._edges.append(hi)
        return self._panels[i]

    def price_delta(self, value, debt=None, h_next=None):
        """Price and dS/dV for arrays of per-day states; scalars broadcast."""
        ctx = self.ctx
        V = np.atleast_1d(np.asarray(value, dtype=float))
        D = np.atleast_1d(np.asarray(ctx.debt if debt is None else debt, dtype=float))
        h = np.atleast_1d(np.asarray(ctx.h_next if h_next is None else h_next, dtype=float))
        V, D, h = np.broadcast_arrays(V, D, h)
        if np.any(V <= 0):
            raise DataError("asset value must be positive")
        if np.any(D < 0):
            raise DataError("debt face must be non-negative")

        n = V.shape[0]
        price = np.where(D == 0.0, V, 0.0)
        delta = np.where(D == 0.0, 1.0, 0.0)
        live = D > 0.0
        if not np.any(live):
            return price, delta

        Vl, Dl, hl = V[live], D[live], h[live]
        lnd = np.log(Dl * self.growth) - np.log(Vl)
        I1 = np.zeros(Vl.shape)
        I2 = np.zeros(Vl.shape)
        I3 = np.zeros(Vl.shape)
        I4 = np.zeros(Vl.shape)
        quiet = 0
        i = 0
        while quiet < 2:
            phi, w, c0_0, c1_0, c0_1, c1_1 = self._panel(i)
            core = -1j * np.outer(lnd, phi) + np.outer(hl, c1_0) + c0_0
            E0 = np.exp(core)
            E1 = np.exp(core + (c0_1 - c0_0) + np.outer(hl, c1_1 - c1_0))
            d2 = (E0.imag / phi) @ w
            d1 = (E1.imag / phi) @ w
            d3 = (E1.real + E1.imag / phi) @ w
            d4 = E0.real @ w
            I1 += d1
            I2 += d2
            I3 += d3
            I4 += d4
            tail = max(
                np.max(np.abs(d1)), np.max(np.abs(d2)),
                np.max(np.abs(d3)), np.max(np.abs(d4)),
            )
            quiet = quiet + 1 if tail < self.spec.rel_tol else 0
            i += 1

        raw_price = Vl * (0.5 + self.discount * I1 / np.pi) - Dl * (0.5 + I2 / np.pi)
        raw_delta = 0.5 + self.discount * I3 / np.pi - self.discount * (Dl * self.growth / Vl) * I4 / np.pi
        lower = np.maximum(Vl - Dl, 0.0)  # e^{-r tau} D_T = D_t
        price[live] = np.clip(raw_price, lower, Vl)
        delta[live] = np.clip(raw_delta, 1e-12, 1.0)
        return price, delta

    def invert(self, equity, debt=None, h_next=None, initial=None, rtol: float = 1e-10):
        """Solve price(V) = equity per day by bracketed, safeguarded Newton."""
        ctx = self.ctx
        S = np.atleast_1d(np.asarray(equity, dtype=float))
        D = np.atleast_1d(np.asarray(ctx.debt if debt is None else debt, dtype=float))
        h = np.atleast_1d(np.asarray(ctx.h_next if h_next is None else h_next, dtype=float))
        S, D, h = np.broadcast_arrays(S, D, h)
        S = S.copy()
        if np.any(S <= 0):
            raise InversionError("observed equity must be positive")

        lo = S.astype(float).copy()
        hi = S + D + 1e-9 * S  # price(V) >= V - D_t pins the root below S + D_t
        V = np.clip(
            hi.copy() if initial is None else np.asarray(initial, dtype=float).copy(),
            lo, hi,
        )
        converged = np.zeros(S.shape, dtype=bool)
        zero_debt = D == 0.0
        V[zero_debt] = S[zero_debt]
        converged[zero_debt] = True
        for _ in range(120):
            if np.all(converged):
                break
            idx = ~converged
            price, delta = self.price_delta(V[idx], D[idx], h[idx])
            resid = price - S[idx]
            ok = np.abs(resid) <= rtol * S[idx]
            sub_hi, sub_lo = hi[idx], lo[idx]
            above = resid > 0
            sub_hi[above] = np.minimum(sub_hi[above], V[idx][above])
            sub_lo[~above] = np.maximum(sub_lo[~above], V[idx][~above])
            step = resid / np.maximum(delta, 1e-12)
            nxt = V[idx] - step
            outside = (nxt <= sub_lo) | (nxt >= sub_hi)
            nxt[outside] = 0.5 * (sub_lo[outside] + sub_hi[outside])
            stalled = (sub_hi - sub_lo) <= 1e-15 * sub_hi
            ok |= stalled & (np.abs(resid) <= 1e-7 * S[idx])
            hi[idx], lo[idx] = sub_hi, sub_lo
            new_v = V[idx]
            new_v[~ok] = nxt[~ok]
            V[idx] = new_v
            conv = converged[idx]
            conv[ok] = True
            converged[idx] = conv
        if not np.all(converged):
            bad = np.flatnonzero(~converged)
            raise InversionError(
                f"asset-value inversion failed on {bad.size} day(s), first at index {bad[0]}"
            )
        return V


def equity_price(ctx: PricingContext, value: float, quad: QuadratureSpec | None = None) -> float:
    """Equity as a European call on assets with strike D_T (Eq.-19 layout)."""
    kernel = PricingKernel(ctx, quad or QuadratureSpec())
    price, _ = kernel.price_delta(value)
    return float(price[0])


def equity_delta(ctx: PricingContext, value: float, quad: QuadratureSpec | None = None) -> float:
    """dS/dV via the same quadrature nodes as the price; lies in (0, 1]."""
    kernel = PricingKernel(ctx, quad or QuadratureSpec())
    _, delta = kernel.price_delta(value)
    return float(delta[0])


def invert_asset_value(
    ctx: PricingContext, equity_observed: float, quad: QuadratureSpec | None = None
) -> float:
    """Asset value implied by an observed equity price.

    Bracketed by [S, S + D_t] (no-arbitrage bounds of the call) and solved by
    Newton with bisection fallback to |price - S| <= 1e-10 * S.
    """
    kernel = PricingKernel(ctx, quad or QuadratureSpec())
    return float(kernel.invert(equity_observed)[0])


def with_maturity(ctx: PricingContext, tau: int) -> PricingContext:
    return replace(ctx, tau=tau)
