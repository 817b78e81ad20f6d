"""Initial data, Radon transforms, radiation fields and free-wave evaluation."""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline, RegularGridInterpolator

from . import _jet
from .quadrature import SphereRule, direction_set, gauss_legendre, product_rule, unit_to_angles

FOUR_PI = 4.0 * np.pi


# ---------------------------------------------------------------------------
# radial profiles


class RadialProfile:
    """A radial function f(s), s = |x - center|, vanishing for s >= support.

    Derivatives are exact: profiles defined by a formula are evaluated in
    truncated Taylor arithmetic, spline profiles through their piecewise
    polynomials.
    """

    def __init__(self, jet_fn=None, support: float = 0.0, spec: dict | None = None,
                 spline: CubicSpline | None = None, inner: float = 0.0):
        self._jet_fn = jet_fn
        self._spline = spline
        self.support = float(support)
        self.inner = float(inner)
        self.spec = spec or {"type": "zero"}

    @property
    def is_zero(self) -> bool:
        return self._jet_fn is None and self._spline is None

    def derivs(self, s, order: int = 2) -> list[np.ndarray]:
        """Return [f, f', ..., f^(order)] at radii ``s``."""
        s = np.asarray(s, dtype=float)
        if self.is_zero:
            return [np.zeros_like(s) for _ in range(order + 1)]
        if self._spline is not None:
            inside = s < self.support
            sc = np.clip(s, 0.0, self.support)
            return [np.where(inside, self._spline(sc, nu=k), 0.0) for k in range(order + 1)]
        jet = self._jet_fn(_jet.Jet.variable(s, order))
        return [jet.derivative(k) for k in range(order + 1)]

    def __call__(self, s):
        return self.derivs(s, 0)[0]

    # constructors -------------------------------------------------------

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def bump(cls, amplitude: float = 1.0, radius: float = 2.0):
        """amplitude * exp(1 - 1/(1 - (s/radius)^2)) inside the ball."""
        if radius <= 0:
            raise ValueError("bump radius must be positive")

        def fn(s):
            q = 1.0 - (s / radius) * (s / radius)
            inside = q.c[0] > 0.0
            safe = _jet.Jet(q.c.copy())
            safe.c[0] = np.where(inside, q.c[0], 1.0)
            val = (1.0 - 1.0 / safe).exp() * amplitude
            return _jet.where(inside, val, _jet.Jet(np.zeros_like(q.c)))

        spec = {"type": "bump", "amplitude": amplitude, "radius": radius}
        return cls(fn, radius, spec)

    @classmethod
    def poly_bump(cls, amplitude: float = 1.0, radius: float = 2.0, power: int = 8):
        """amplitude * (1 - (s/radius)^2)^power inside the ball; C^(power-1) at the edge.

        Its high derivatives stay moderate, which suits convergence studies.
        """
        if radius <= 0 or power < 1 or int(power) != power:
            raise ValueError("poly_bump needs a positive radius and a positive integer power")

        def fn(s):
            q = 1.0 - (s / radius) * (s / radius)
            inside = q.c[0] > 0.0
            val = q
            for _ in range(int(power) - 1):
                val = val * q
            return _jet.where(inside, val * amplitude, _jet.Jet(np.zeros_like(q.c)))

        spec = {"type": "poly_bump", "amplitude": amplitude, "radius": radius, "power": int(power)}
        return cls(fn, radius, spec)

    @classmethod
    def window(cls, center: float, width: float, value: float, slope: float):
        """(value + slope (s - center)) chi((s - center)/width), chi = 1 on [-1/2, 1/2], 0 outside [-1, 1]."""
        if width <= 0 or center - width < 0:
            raise ValueError("window must have positive width and stay inside s >= 0")

        def fn(s):
            return (value + slope * (s - center)) * _jet.plateau((s - center) / width)

        spec = {"type": "window", "center": center, "width": width, "value": value, "slope": slope}
        return cls(fn, center + width, spec, inner=center - width)

    @classmethod
    def shifted_bump(cls, center: float, width: float, amplitude: float = 1.0):
        """amplitude * exp(1 - 1/(1 - y^2)), y = (s - center)/width, zero for |y| >= 1."""
        if width <= 0 or center - width < 0:
            raise ValueError("bump must have positive width and stay inside s >= 0")

        def fn(s):
            y = (s - center) / width
            q = 1.0 - y * y
            inside = q.c[0] > 0.0
            safe = _jet.Jet(q.c.copy())
            safe.c[0] = np.where(inside, q.c[0], 1.0)
            val = (1.0 - 1.0 / safe).exp() * amplitude
            return _jet.where(inside, val, _jet.Jet(np.zeros_like(q.c)))

        spec = {"type": "shifted_bump", "center": center, "width": width, "amplitude": amplitude}
        return cls(fn, center + width, spec, inner=center - width)

    @classmethod
    def ramp(cls, start: float, rise: float, fall: float, height: float = 1.0):
        """Rises smoothly from 0 to ``height`` on [start, start+rise], falls back to 0 over the next ``fall``."""
        if start < 0 or rise <= 0 or fall <= 0:
            raise ValueError("ramp needs start >= 0 and positive rise and fall lengths")
        top = start + rise

        def fn(s):
            up = _jet.smooth_step((s - start) / rise)
            down = 1.0 - _jet.smooth_step((s - top) / fall)
            return up * down * height

        spec = {"type": "ramp", "start": start, "rise": rise, "fall": fall, "height": height}
        return cls(fn, top + fall, spec, inner=start)

    @classmethod
    def prescribed_zeta(cls, sigma0: float, alpha: float, beta: float):
        """zeta(s) = (a + b (s - s0)) chi((s - s0)/delta) with zeta(s0)=2 alpha, zeta'(s0)=2 sgn(sigma0) beta."""
        s0 = abs(sigma0)
        delta = min(s0 / 2.0, 1.0)
        prof = cls.window(s0, delta, 2.0 * alpha, 2.0 * math.copysign(1.0, sigma0) * beta)
        prof.spec = {"type": "zeta", "sigma0": sigma0, "alpha": alpha, "beta": beta}
        return prof

    @classmethod
    def over_radius(cls, zeta: "RadialProfile", derivative: int = 0, scale: float = 1.0):
        """scale * zeta^(derivative)(s) / s, for a zeta vanishing near the origin."""
        if derivative not in (0, 1):
            raise ValueError("derivative must be 0 or 1")
        if zeta.is_zero:
            return cls.zero()
        if zeta.inner <= 0.0:
            raise ValueError("zeta must vanish near s = 0")

        def fn(s):
            order = s.order
            z = zeta.derivs(s.c[0], order + derivative)
            # Taylor coefficients of zeta^(derivative) from its derivatives
            c = np.array([z[k + derivative] / math.factorial(k) for k in range(order + 1)])
            safe = _jet.Jet(s.c.copy())
            safe.c[0] = np.where(s.c[0] > 0.0, s.c[0], 1.0)
            return (_jet.Jet(c) / safe) * scale

        spec = {"type": "over_radius", "zeta": zeta.spec, "derivative": derivative, "scale": scale}
        return cls(fn, zeta.support, spec, inner=zeta.inner)

    @classmethod
    def prescribed_psi(cls, sigma0: float, alpha: float, beta: float):
        """psi = -zeta'(s)/s for the zeta of :meth:`prescribed_zeta`."""
        prof = cls.over_radius(cls.prescribed_zeta(sigma0, alpha, beta), 1, -1.0)
        prof.spec = {"type": "prescribed_psi", "sigma0": sigma0, "alpha": alpha, "beta": beta}
        return prof

    @classmethod
    def spline(cls, knots, values):
        """Clamped cubic spline through (knots, values); the last knot is the support radius."""
        knots = np.asarray(knots, dtype=float)
        values = np.asarray(values, dtype=float)
        if knots.ndim != 1 or knots.size < 3 or knots.size != values.size:
            raise ValueError("spline profile needs matching knot/value lists of length >= 3")
        if knots[0] != 0.0 or np.any(np.diff(knots) <= 0):
            raise ValueError("spline knots must start at 0 and increase")
        if abs(values[-1]) > 0.0:
            raise ValueError("spline profile must vanish at its last knot")
        sp = CubicSpline(knots, values, bc_type=((1, 0.0), (1, 0.0)))
        spec = {"type": "spline", "knots": knots.tolist(), "values": values.tolist()}
        return cls(None, knots[-1], spec, spline=sp)

    @classmethod
    def from_spec(cls, spec):
        if spec is None or spec == "zero":
            return cls.zero()
        kind = spec.get("type")
        if kind == "zero":
            return cls.zero()
        if kind == "bump":
            return cls.bump(float(spec.get("amplitude", 1.0)), float(spec.get("radius", 2.0)))
        if kind == "poly_bump":
            return cls.poly_bump(float(spec.get("amplitude", 1.0)), float(spec.get("radius", 2.0)),
                                 int(spec.get("power", 8)))
        if kind == "zeta":
            return cls.prescribed_zeta(float(spec["sigma0"]), float(spec["alpha"]), float(spec["beta"]))
        if kind == "prescribed_psi":
            return cls.prescribed_psi(float(spec["sigma0"]), float(spec["alpha"]), float(spec["beta"]))
        if kind == "spline":
            return cls.spline(spec["knots"], spec["values"])
        if kind == "shifted_bump":
            return cls.shifted_bump(float(spec["center"]), float(spec["width"]), float(spec.get("amplitude", 1.0)))
        if kind == "ramp":
            return cls.ramp(float(spec["start"]), float(spec["rise"]), float(spec["fall"]),
                            float(spec.get("height", 1.0)))
        if kind == "window":
            return cls.window(float(spec["center"]), float(spec["width"]), float(spec.get("value", 0.0)),
                              float(spec.get("slope", 0.0)))
        if kind == "over_radius":
            return cls.over_radius(profile_from_spec(spec["zeta"]), int(spec.get("derivative", 0)),
                                   float(spec.get("scale", 1.0)))
        raise ValueError(f"unknown profile type {kind!r}")


class SumProfile(RadialProfile):
    """Sum of radial profiles."""

    def __init__(self, parts):
        parts = [p for p in parts if not p.is_zero]
        self.parts = parts
        support = max((p.support for p in parts), default=0.0)
        inner = min((p.inner for p in parts), default=0.0)
        super().__init__(None, support, {"type": "sum", "parts": [p.spec for p in parts]}, inner=inner)

    @property
    def is_zero(self):
        return not self.parts

    def derivs(self, s, order=2):
        s = np.asarray(s, dtype=float)
        out = [np.zeros_like(s) for _ in range(order + 1)]
        for p in self.parts:
            for k, v in enumerate(p.derivs(s, order)):
                out[k] = out[k] + v
        return out


def profile_from_spec(spec) -> RadialProfile:
    if isinstance(spec, dict) and spec.get("type") == "sum":
        return SumProfile([profile_from_spec(p) for p in spec["parts"]])
    return RadialProfile.from_spec(spec)


# ---------------------------------------------------------------------------
# initial data


@dataclass
class InitialData:
    """Scalar Cauchy data (phi, psi) for one component, scaled by ``eps``.

    ``kind`` is ``radial_closed_form`` (profiles about ``center``) or
    ``grid_sampled`` (arrays on the cube [-L, L]^3 with spacing h).
    """

    kind: str = "radial_closed_form"
    phi: RadialProfile = field(default_factory=RadialProfile.zero)
    psi: RadialProfile = field(default_factory=RadialProfile.zero)
    eps: float = 1.0
    support_radius: float = 0.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phi_grid: np.ndarray | None = None
    psi_grid: np.ndarray | None = None
    grid_L: float = 0.0
    grid_h: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if self.kind == "radial_closed_form":
            needed = max(self.phi.support, self.psi.support)
            if self.support_radius <= 0.0:
                self.support_radius = needed
            elif self.support_radius + 1e-12 < needed:
                raise ValueError("support_radius is smaller than the profile supports")
        elif self.kind == "grid_sampled":
            if self.phi_grid is None or self.psi_grid is None:
                raise ValueError("grid_sampled data needs phi_grid and psi_grid")
            if self.grid_h <= 0 or self.grid_L <= 0:
                raise ValueError("grid_sampled data needs grid_L and grid_h")
            self._grid_cache = None
        else:
            raise ValueError(f"unknown data kind {self.kind!r}")

    @property
    def is_zero(self) -> bool:
        if self.kind == "radial_closed_form":
            return self.phi.is_zero and self.psi.is_zero
        return not (np.any(self.phi_grid) or np.any(self.psi_grid))

    # pointwise evaluation (unscaled by eps) -----------------------------

    def fields(self, x, need_hessian: bool = True) -> dict:
        """phi, grad phi, hess phi, lap phi, psi, grad psi at points x (..., 3); eps not applied."""
        x = np.asarray(x, dtype=float)
        if self.kind == "grid_sampled":
            return self._grid_fields(x)
        y = x - self.center
        s = np.linalg.norm(y, axis=-1)
        small = s < 1e-10
        ss = np.where(small, 1.0, s)
        yhat = y / ss[..., None]
        yhat = np.where(small[..., None], 0.0, yhat)
        f = self.phi.derivs(s, 2)
        g = self.psi.derivs(s, 1)
        # f'/s -> f''(0) at the centre
        f1_over_s = np.where(small, f[2], f[1] / ss)
        out = {
            "phi": f[0],
            "grad_phi": f[1][..., None] * yhat,
            "lap_phi": f[2] + 2.0 * f1_over_s,
            "psi": g[0],
            "grad_psi": g[1][..., None] * yhat,
        }
        if need_hessian:
            eye = np.eye(3)
            outer = yhat[..., :, None] * yhat[..., None, :]
            hess = (f[2][..., None, None] * outer
                    + f1_over_s[..., None, None] * (eye - outer))
            hess = np.where(small[..., None, None], f[2][..., None, None] * eye, hess)
            out["hess_phi"] = hess
        return out

    def sample(self, x) -> tuple[np.ndarray, np.ndarray]:
        """eps*phi and eps*psi at points x."""
        if self.kind == "grid_sampled":
            fl = self._grid_fields(np.asarray(x, dtype=float))
            return self.eps * fl["phi"], self.eps * fl["psi"]
        s = np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1)
        return self.eps * self.phi(s), self.eps * self.psi(s)

    def _grid_fields(self, x):
        from scipy.ndimage import map_coordinates
        if self._grid_cache is None:
            h = self.grid_h
            gphi = np.gradient(self.phi_grid, h)
            gpsi = np.gradient(self.psi_grid, h)
            hess = [[np.gradient(gphi[i], h, axis=j) for j in range(3)] for i in range(3)]
            self._grid_cache = (gphi, gpsi, hess)
        gphi, gpsi, hess = self._grid_cache
        idx = (x - (-self.grid_L)) / self.grid_h
        coords = np.moveaxis(idx, -1, 0)

        def interp(arr):
            return map_coordinates(arr, coords, order=3, mode="constant", cval=0.0)

        H = np.stack([np.stack([interp(hess[i][j]) for j in range(3)], -1) for i in range(3)], -2)
        return {
            "phi": interp(self.phi_grid),
            "grad_phi": np.stack([interp(g) for g in gphi], -1),
            "hess_phi": H,
            "lap_phi": H[..., 0, 0] + H[..., 1, 1] + H[..., 2, 2],
            "psi": interp(self.psi_grid),
            "grad_psi": np.stack([interp(g) for g in gpsi], -1),
        }

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        if self.kind != "radial_closed_form":
            raise ValueError("only radial data has a JSON form")
        return {
            "kind": self.kind,
            "eps": self.eps,
            "support_radius": self.support_radius,
            "center": self.center.tolist(),
            "phi": self.phi.spec,
            "psi": self.psi.spec,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InitialData":
        if not isinstance(d, dict):
            raise ValueError("initial data entry must be an object")
        kind = d.get("kind", "radial_closed_form")
        eps = float(d.get("eps", 1.0))
        if kind == "prescribed_field":
            data = make_data_with_prescribed_field(float(d["sigma0"]), float(d["alpha"]), float(d["beta"]))
            data.eps = eps
            if "center" in d:
                data.center = np.asarray(d["center"], dtype=float)
            return data
        if kind == "outgoing":
            data = outgoing_data(profile_from_spec(d["zeta"]), eps, d.get("center", (0.0, 0.0, 0.0)))
            return data
        if kind != "radial_closed_form":
            raise ValueError(f"initial data kind {kind!r} has no JSON form")
        return cls(
            kind=kind,
            phi=profile_from_spec(d.get("phi")),
            psi=profile_from_spec(d.get("psi")),
            eps=eps,
            support_radius=float(d.get("support_radius", 0.0)),
            center=d.get("center", [0.0, 0.0, 0.0]),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def radial_data(phi: RadialProfile | None = None, psi: RadialProfile | None = None,
                eps: float = 1.0, center=(0.0, 0.0, 0.0)) -> InitialData:
    return InitialData(phi=phi or RadialProfile.zero(), psi=psi or RadialProfile.zero(),
                       eps=eps, center=np.asarray(center, dtype=float))


def outgoing_data(zeta: RadialProfile, eps: float = 1.0, center=(0.0, 0.0, 0.0)) -> InitialData:
    """Data phi = zeta/s, psi = -zeta'/s, whose radiation field is zeta(sigma) for sigma > 0 and 0 for sigma < 0."""
    return radial_data(RadialProfile.over_radius(zeta, 0, 1.0), RadialProfile.over_radius(zeta, 1, -1.0),
                       eps, center)


def make_data_with_prescribed_field(sigma0: float, alpha: float, beta: float) -> InitialData:
    """Radial data with phi = 0 whose radiation field satisfies F0(sigma0) = alpha, dF0(sigma0) = beta."""
    if sigma0 == 0.0:
        raise ValueError("sigma0 must be nonzero")
    psi = RadialProfile.prescribed_psi(sigma0, alpha, beta)
    return InitialData(phi=RadialProfile.zero(), psi=psi, eps=1.0, support_radius=psi.support)


# ---------------------------------------------------------------------------
# profile grids


@dataclass
class ProfileGrid:
    """Values on a uniform sigma grid times a sphere rule: ``values[comp, i_sigma, i_omega]``."""

    sigma: np.ndarray
    sphere: SphereRule
    values: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.shape[1:] != (self.sigma.size, self.sphere.size):
            raise ValueError("profile values do not match the grid")
        if self.sigma.size > 2:
            d = np.diff(self.sigma)
            if np.max(np.abs(d - d[0])) > 1e-9 * max(1.0, abs(d[0])):
                raise ValueError("sigma grid must be uniform")

    @property
    def n_comp(self):
        return self.values.shape[0]

    @property
    def d_sigma(self):
        return float(self.sigma[1] - self.sigma[0]) if self.sigma.size > 1 else 0.0

    def l2_norm(self) -> float:
        """Norm in L^2(R x S^2) summed over components (trapezoid in sigma)."""
        w_sigma = np.full(self.sigma.size, self.d_sigma)
        if self.sigma.size > 1:
            w_sigma[[0, -1]] *= 0.5
        sq = np.einsum("cso,s,o->", self.values ** 2, w_sigma, self.sphere.weights)
        return float(np.sqrt(sq))

    def interpolate(self, sigma, omega) -> np.ndarray:
        """Values at arbitrary (sigma, omega); zero outside the sigma range. Returns (comp, ...)."""
        sigma = np.asarray(sigma, dtype=float)
        omega = np.asarray(omega, dtype=float)
        out = np.zeros((self.n_comp,) + sigma.shape)
        inside = (sigma >= self.sigma[0]) & (sigma <= self.sigma[-1])
        if not np.any(inside):
            return out
        s_in = sigma[inside]
        o_in = omega[inside]
        if self.sphere.size == 1 or np.allclose(self.values, self.values[:, :, :1], atol=0.0, rtol=0.0):
            for c in range(self.n_comp):
                out[c][inside] = np.interp(s_in, self.sigma, self.values[c, :, 0])
            return out
        if self.sphere.n_theta is None:
            # nearest direction for scattered ray sets
            j = np.argmax(o_in @ self.sphere.nodes.T, axis=-1)
            for c in range(self.n_comp):
                vals = self.values[c]
                lo = np.clip(np.searchsorted(self.sigma, s_in) - 1, 0, self.sigma.size - 2)
                frac = (s_in - self.sigma[lo]) / self.d_sigma
                out[c][inside] = (1 - frac) * vals[lo, j] + frac * vals[lo + 1, j]
            return out
        nt, nphi = self.sphere.n_theta, self.sphere.n_phi
        thetas = self.sphere.theta.reshape(nt, nphi)[:, 0]
        phis = self.sphere.phi.reshape(nt, nphi)[0]
        order = np.argsort(thetas)
        th_ext = np.concatenate([[0.0], thetas[order], [np.pi]])
        ph_ext = np.concatenate([phis[-1:] - 2 * np.pi, phis, phis[:1] + 2 * np.pi])
        th, ph = unit_to_angles(o_in)
        pts = np.stack([s_in, th, ph], -1)
        for c in range(self.n_comp):
            v = self.values[c].reshape(self.sigma.size, nt, nphi)[:, order]
            # pole rows: azimuthal mean of the nearest ring
            north = v[:, :1].mean(axis=2, keepdims=True).repeat(nphi, 2)
            south = v[:, -1:].mean(axis=2, keepdims=True).repeat(nphi, 2)
            v = np.concatenate([north, v, south], axis=1)
            v = np.concatenate([v[:, :, -1:], v, v[:, :, :1]], axis=2)
            interp = RegularGridInterpolator((self.sigma, th_ext, ph_ext), v)
            out[c][inside] = interp(pts)
        return out

    # CSV --------------------------------------------------------------------

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "sigma", "theta", "phi", "value"])
            for c in range(self.n_comp):
                for i, s in enumerate(self.sigma):
                    for j in range(self.sphere.size):
                        w.writerow([c, repr(float(s)), repr(float(self.sphere.theta[j])),
                                    repr(float(self.sphere.phi[j])), repr(float(self.values[c, i, j]))])

    @classmethod
    def from_csv(cls, path) -> "ProfileGrid":
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        comps = np.unique(rows[:, 0]).astype(int)
        sig = np.unique(rows[:, 1])
        dirs = []
        seen = {}
        for th, ph in rows[:, 2:4]:
            key = (th, ph)
            if key not in seen:
                seen[key] = len(dirs)
                dirs.append(key)
        dirs = np.array(dirs)
        sphere = _rebuild_sphere(dirs)
        vals = np.zeros((comps.size, sig.size, len(dirs)))
        si = np.searchsorted(sig, rows[:, 1])
        oi = np.array([seen[(a, b)] for a, b in rows[:, 2:4]])
        vals[rows[:, 0].astype(int), si, oi] = rows[:, 4]
        return cls(sig, sphere, vals)


def _rebuild_sphere(dirs) -> SphereRule:
    n = dirs.shape[0]
    for nt in range(1, n + 1):
        if n % nt:
            continue
        nphi = n // nt
        cand = product_rule(nt, nphi)
        if np.allclose(cand.theta, dirs[:, 0], atol=1e-12) and np.allclose(cand.phi, dirs[:, 1], atol=1e-12):
            return cand
    from .quadrature import angles_to_unit
    return direction_set(angles_to_unit(dirs[:, 0], dirs[:, 1]))


def default_sigma_grid(support_radius: float, spacing: float = 0.05) -> np.ndarray:
    """Uniform grid over [-R-2, R+2]."""
    lo = -support_radius - 2.0
    n = int(round((2 * support_radius + 4.0) / spacing)) + 1
    return lo + spacing * np.arange(n)


# ---------------------------------------------------------------------------
# Radon transforms


def _plane_frame(omega):
    omega = np.asarray(omega, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(omega[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(omega, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(omega, e1)
    return e1, e2


def radon_transform(h, sigma: float, omega, support_radius: float, center=(0.0, 0.0, 0.0),
                    n_radial: int = 64, n_angular: int = 64) -> float:
    """Integral of h over the plane {x . omega = sigma}, with h supported in a ball.

    ``h`` maps points (..., 3) to values. Polar rule on the disk cut out by
    the ball: Gauss-Legendre in the radius, uniform in the angle.
    """
    omega = np.asarray(omega, dtype=float)
    if abs(np.linalg.norm(omega) - 1.0) > 1e-12:
        raise ValueError("omega must be a unit vector")
    center = np.asarray(center, dtype=float)
    offset = sigma - center @ omega
    if abs(offset) >= support_radius:
        return 0.0
    rho_max = math.sqrt(support_radius ** 2 - offset ** 2)
    foot = center + offset * omega
    e1, e2 = _plane_frame(omega)
    rho, w_rho = gauss_legendre(0.0, rho_max, n_radial)
    ang = np.arange(n_angular) * (2 * np.pi / n_angular)
    dirs = np.cos(ang)[:, None] * e1 + np.sin(ang)[:, None] * e2
    pts = foot + rho[:, None, None] * dirs[None, :, :]
    vals = np.asarray(h(pts), dtype=float)
    return float(np.einsum("ra,r->", vals, w_rho * rho) * (2 * np.pi / n_angular))


def radon_radial(profile: RadialProfile, sigma) -> np.ndarray:
    """2*pi * integral_{|sigma|}^inf s f(s) ds by adaptive quadrature."""
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    out = np.zeros_like(sig)
    R = profile.support
    for i, sv in enumerate(np.abs(sig)):
        if sv >= R or profile.is_zero:
            continue
        lo = max(sv, profile.inner)
        val, _ = integrate.quad(lambda s: s * float(profile(s)), lo, R,
                                epsabs=1e-14, epsrel=1e-13, limit=400)
        out[i] = 2 * np.pi * val
    return out if np.ndim(sigma) else out[0]


def _tail_moment(profile: RadialProfile, a, n_panels: int = 16, n_nodes: int = 32,
                 chunk: int = 4096) -> np.ndarray:
    """integral_a^R s f(s) ds for an array of lower limits (composite Gauss-Legendre per limit)."""
    a = np.asarray(a, dtype=float)
    R = profile.support
    if profile.is_zero:
        return np.zeros_like(a)
    lo = np.clip(np.maximum(a, profile.inner), None, R).reshape(-1)
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    out = np.empty_like(lo)
    for i in range(0, lo.size, chunk):
        l = lo[i:i + chunk]
        width = (R - l) / n_panels
        left = l[:, None] + width[:, None] * np.arange(n_panels)           # (m, panels)
        s = left[..., None] + 0.5 * width[:, None, None] * (x + 1.0)        # (m, panels, nodes)
        out[i:i + chunk] = np.sum(w * s * profile(s), axis=(-2, -1)) * 0.5 * width
    return out.reshape(a.shape)


# ---------------------------------------------------------------------------
# radiation fields


def friedlander_field(data: InitialData, sigma, sphere: SphereRule | None = None,
                      derivative: int = 0) -> ProfileGrid:
    """Radiation field F0 (derivative=0) or its sigma-derivative (derivative=1) of eps*(phi, psi)."""
    if derivative not in (0, 1):
        raise ValueError("derivative must be 0 or 1")
    sphere = sphere or product_rule()
    sigma = np.asarray(sigma, dtype=float)
    if data.kind != "radial_closed_form":
        return _friedlander_numeric(data, sigma, sphere, derivative)
    se = sigma[:, None] - (sphere.nodes @ data.center)[None, :]
    a = np.abs(se)
    if derivative == 0:
        # centred data: a depends on sigma only, so evaluate each distinct radius once
        ua, inv = np.unique(a, return_inverse=True)
        tail = _tail_moment(data.psi, ua)[inv.reshape(a.shape)]
        val = 0.5 * tail + 0.5 * se * data.phi(a)
    else:
        f = data.phi.derivs(a, 1)
        val = -0.5 * se * data.psi(a) + 0.5 * (f[0] + a * f[1])
    return ProfileGrid(sigma, sphere, data.eps * val[None])


def _friedlander_numeric(data, sigma, sphere, derivative):
    L = data.grid_L
    R = L * math.sqrt(3.0)
    h = 1e-3

    def phi_fn(p):
        return data._grid_fields(p)["phi"]

    def psi_fn(p):
        return data._grid_fields(p)["psi"]

    def F(sv, om):
        rp = radon_transform(psi_fn, sv, om, R)
        dphi = (radon_transform(phi_fn, sv + h, om, R) - radon_transform(phi_fn, sv - h, om, R)) / (2 * h)
        return (rp - dphi) / FOUR_PI

    vals = np.zeros((sigma.size, sphere.size))
    for j, om in enumerate(sphere.nodes):
        for i, sv in enumerate(sigma):
            if derivative == 0:
                vals[i, j] = F(sv, om)
            else:
                vals[i, j] = (F(sv + h, om) - F(sv - h, om)) / (2 * h)
    return ProfileGrid(sigma, sphere, data.eps * vals[None])


def translation_representation(data: InitialData, sigma=None, sphere: SphereRule | None = None) -> ProfileGrid:
    """T(sigma, omega) = dF0/dsigma, the isometric image of the data."""
    if sigma is None:
        sigma = default_sigma_grid(data.support_radius + float(np.linalg.norm(data.center)))
    return friedlander_field(data, sigma, sphere, derivative=1)


def radiation_fields(data_list, sigma, sphere: SphereRule | None = None, derivative: int = 0) -> ProfileGrid:
    """Stack :func:`friedlander_field` over components."""
    sphere = sphere or product_rule()
    grids = [friedlander_field(d, sigma, sphere, derivative) for d in data_list]
    return ProfileGrid(np.asarray(sigma, dtype=float), sphere, np.concatenate([g.values for g in grids]))


def h0_norm(data: InitialData) -> float:
    """(1/2 integral |grad eps phi|^2 + |eps psi|^2)^(1/2)."""
    if data.kind == "grid_sampled":
        gp = np.gradient(data.phi_grid, data.grid_h)
        dens = sum(g ** 2 for g in gp) + data.psi_grid ** 2
        return float(data.eps * np.sqrt(0.5 * np.sum(dens) * data.grid_h ** 3))
    R = data.support_radius
    if R <= 0.0:
        return 0.0

    def dens(s):
        f1 = data.phi.derivs(s, 1)[1]
        return s * s * (float(f1) ** 2 + float(data.psi(s)) ** 2)

    inner = min(data.phi.inner if not data.phi.is_zero else R, data.psi.inner if not data.psi.is_zero else R)
    val, _ = integrate.quad(dens, inner, R, epsabs=1e-15, epsrel=1e-12, limit=400)
    return float(data.eps * math.sqrt(0.5 * FOUR_PI * val))


# ---------------------------------------------------------------------------
# free waves


def _cap_rule(x, t, center, R, n_theta, n_phi):
    """Nodes/weights on the unit sphere restricted to directions n with |x + t n - center| <= R."""
    d_vec = center - x
    d = float(np.linalg.norm(d_vec))
    if d < 1e-14:
        if t > R:
            return None
        pole = np.array([0.0, 0.0, 1.0])
        c_min = -1.0
    else:
        pole = d_vec / d
        c_min = (d * d + t * t - R * R) / (2.0 * d * t)
        if c_min >= 1.0:
            return None
        c_min = max(c_min, -1.0)
    e1, e2 = _plane_frame(pole)
    c, wc = gauss_legendre(c_min, 1.0, n_theta)
    az = (np.arange(n_phi) + 0.5) * (2 * np.pi / n_phi)
    sn = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
    n = (c[:, None, None] * pole
         + sn[:, None, None] * (np.cos(az)[None, :, None] * e1 + np.sin(az)[None, :, None] * e2))
    w = wc[:, None] * np.full(n_phi, 2 * np.pi / n_phi)[None, :]
    return n.reshape(-1, 3), w.reshape(-1)


def kirchhoff_eval(data: InitialData, t: float, x, n_theta: int = 64, n_phi: int = 64):
    """Free wave u and (d_t u, d_1 u, d_2 u, d_3 u) at time t, points x (..., 3).

    Spherical means over the part of the sphere |y - x| = t that meets the
    data support, integrated with Gauss-Legendre in the polar cosine.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    pts = x.reshape(-1, 3)
    u = np.zeros(pts.shape[0])
    du = np.zeros((pts.shape[0], 4))
    if t == 0.0:
        f = data.fields(pts, need_hessian=False)
        u[:] = f["phi"]
        du[:, 0] = f["psi"]
        du[:, 1:] = f["grad_phi"]
        return data.eps * u.reshape(shape), data.eps * du.reshape(shape + (4,))
    R = data.support_radius if data.kind == "radial_closed_form" else data.grid_L * math.sqrt(3.0)
    center = data.center if data.kind == "radial_closed_form" else np.zeros(3)
    for i, p in enumerate(pts):
        rule = _cap_rule(p, t, center, R, n_theta, n_phi)
        if rule is None:
            continue
        n, w = rule
        f = data.fields(p + t * n)
        mean = lambda v: np.tensordot(w, v, axes=(0, 0)) / FOUR_PI  # noqa: E731
        n_grad_phi = np.einsum("qi,qi->q", n, f["grad_phi"])
        n_grad_psi = np.einsum("qi,qi->q", n, f["grad_psi"])
        hess_n = np.einsum("qij,qj->qi", f["hess_phi"], n)
        u[i] = t * mean(f["psi"]) + mean(f["phi"]) + t * mean(n_grad_phi)
        du[i, 0] = mean(f["psi"]) + t * mean(n_grad_psi) + t * mean(f["lap_phi"])
        du[i, 1:] = mean(f["grad_phi"]) + t * mean(hess_n) + t * mean(f["grad_psi"])
    return data.eps * u.reshape(shape), data.eps * du.reshape(shape + (4,))
