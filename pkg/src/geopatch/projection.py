"""Closed-form map projections and CRS-to-CRS coordinate transformation.

Supported projections: ellipsoidal transverse Mercator (series in the third
flattening to fourth order), ellipsoidal Albers equal-area conic, spherical
Web Mercator on the semi-major-axis sphere, and plain geographic coordinates.

Datum shifts are out of scope: WGS84 and GRS80 differ by less than 0.1 mm in
flattening and are treated as coincident, so transformations between layers on
either ellipsoid go through shared geographic coordinates directly.

All math is vectorized: the array entry points accept numpy arrays and mark
out-of-domain points with NaN; the scalar entry points raise OutOfDomain.
Everything here is pure and safe for unrestricted concurrent use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OutOfDomain
from .geometry import BoundingBox

GEOGRAPHIC = "geographic"
TRANSVERSE_MERCATOR = "transverse_mercator"
ALBERS_EQUAL_AREA = "albers_equal_area"
WEB_MERCATOR = "web_mercator"

# semi-major axis, inverse flattening
WGS84 = (6378137.0, 298.257223563)
GRS80 = (6378137.0, 298.257222101)
SPHERE = (6378137.0, math.inf)

# transverse Mercator series validity: half-width around the central meridian
TM_MAX_DLON = 45.0
TM_MAX_LAT = 89.999
WEBMERC_MAX_LAT = 89.9


@dataclass(frozen=True)
class CrsDef:
    """Projection kind plus ellipsoid and projection parameters.

    epsg is a display alias only; equality of two CRS is parameter-wise
    (see equivalent), so hand-built parameter sets match their aliases.
    """

    kind: str
    a: float = WGS84[0]
    inv_f: float = WGS84[1]
    lon_0: float = 0.0
    lat_0: float = 0.0
    k0: float = 1.0
    false_easting: float = 0.0
    false_northing: float = 0.0
    lat_1: float = 0.0
    lat_2: float = 0.0
    epsg: int | None = None

    def __post_init__(self):
        if not -180.0 <= self.lon_0 <= 180.0:
            raise ValueError(f"central meridian out of range: {self.lon_0}")
        if self.kind == ALBERS_EQUAL_AREA and self.lat_1 == -self.lat_2:
            raise ValueError("Albers standard parallels must not be opposite")
        if self.kind not in (GEOGRAPHIC, TRANSVERSE_MERCATOR, ALBERS_EQUAL_AREA,
                             WEB_MERCATOR):
            raise ValueError(f"unknown projection kind: {self.kind}")

    @property
    def f(self) -> float:
        return 0.0 if math.isinf(self.inv_f) else 1.0 / self.inv_f

    def __str__(self):
        return f"EPSG:{self.epsg}" if self.epsg else self.kind


@dataclass(frozen=True)
class LonLat:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and abs(self.lat) <= 90.0):
            raise ValueError(f"bad geographic coordinate: {self}")


@dataclass(frozen=True)
class ProjXY:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite projected coordinate: {self}")


_PARAMS = ("a", "inv_f", "lon_0", "lat_0", "k0", "false_easting",
           "false_northing", "lat_1", "lat_2")


def equivalent(a: CrsDef, b: CrsDef, tol: float = 1e-12) -> bool:
    """Parameter-wise CRS equality with tolerance; ignores the epsg alias."""
    if a.kind != b.kind:
        return False
    return all(
        math.isclose(getattr(a, p), getattr(b, p), rel_tol=tol, abs_tol=tol)
        for p in _PARAMS
    )


def crs_from_epsg(code: int) -> CrsDef:
    """Expand a recognized EPSG code to its parameter set."""
    if code == 4326:
        return CrsDef(GEOGRAPHIC, *WGS84, epsg=4326)
    if code == 3857:
        return CrsDef(WEB_MERCATOR, *SPHERE, epsg=3857)
    if code == 5070:
        return CrsDef(ALBERS_EQUAL_AREA, *GRS80, lon_0=-96.0, lat_0=23.0,
                      lat_1=29.5, lat_2=45.5, epsg=5070)
    zone = code % 100
    if code // 100 in (326, 327) and 1 <= zone <= 60:
        fn = 0.0 if code // 100 == 326 else 10_000_000.0
        return CrsDef(TRANSVERSE_MERCATOR, *WGS84, lon_0=zone * 6 - 183,
                      k0=0.9996, false_easting=500_000.0, false_northing=fn,
                      epsg=code)
    raise ValueError(f"unrecognized EPSG code: {code}")


def parse_crs(text: str) -> CrsDef:
    """Parse a CRS string of the form 'EPSG:nnnn'."""
    head, sep, tail = text.strip().partition(":")
    if head.upper() != "EPSG" or not sep or not tail.isdigit():
        raise ValueError(f"expected 'EPSG:nnnn', got {text!r}")
    return crs_from_epsg(int(tail))


def epsg_alias(crs: CrsDef) -> int | None:
    """EPSG code whose parameter set matches crs, if any."""
    if crs.epsg is not None:
        return crs.epsg
    candidates = [4326, 3857, 5070]
    candidates += [32600 + z for z in range(1, 61)]
    candidates += [32700 + z for z in range(1, 61)]
    for code in candidates:
        if equivalent(crs, crs_from_epsg(code)):
            return code
    return None


# ---------------------------------------------------------------------------
# transverse Mercator (series in the third flattening n, order n^4)

@lru_cache(maxsize=None)
def _tm_constants(a: float, f: float):
    n = f / (2.0 - f)
    e = math.sqrt(f * (2.0 - f))
    rect_a = a / (1.0 + n) * (1.0 + n**2 / 4.0 + n**4 / 64.0)
    alpha = (
        n / 2 - 2 * n**2 / 3 + 5 * n**3 / 16 + 41 * n**4 / 180,
        13 * n**2 / 48 - 3 * n**3 / 5 + 557 * n**4 / 1440,
        61 * n**3 / 240 - 103 * n**4 / 140,
        49561 * n**4 / 161280,
    )
    beta = (
        n / 2 - 2 * n**2 / 3 + 37 * n**3 / 96 - n**4 / 360,
        n**2 / 48 + n**3 / 15 - 437 * n**4 / 1440,
        17 * n**3 / 480 - 37 * n**4 / 840,
        4397 * n**4 / 161280,
    )
    return e, rect_a, alpha, beta


def _wrap_dlon(dlon_deg):
    # wraps into (-180, 180] so +180 stays +180
    return 180.0 - np.remainder(180.0 - np.asarray(dlon_deg, dtype=float), 360.0)


def _tm_forward(crs: CrsDef, lon, lat):
    e, rect_a, alpha, _ = _tm_constants(crs.a, crs.f)
    dlon = _wrap_dlon(np.asarray(lon, dtype=float) - crs.lon_0)
    lat = np.asarray(lat, dtype=float)
    bad = (np.abs(dlon) > TM_MAX_DLON) | (np.abs(lat) > TM_MAX_LAT)
    lam = np.radians(np.where(bad, 0.0, dlon))
    phi = np.radians(np.where(bad, 0.0, lat))

    tau = np.tan(phi)
    sigma = np.sinh(e * np.arctanh(e * tau / np.sqrt(1.0 + tau * tau)))
    taup = tau * np.sqrt(1.0 + sigma * sigma) - sigma * np.sqrt(1.0 + tau * tau)
    xi = np.arctan2(taup, np.cos(lam))
    eta = np.arcsinh(np.sin(lam) / np.sqrt(taup * taup + np.cos(lam) ** 2))
    y, x = _apply_series(xi, eta, alpha, sign=+1.0)
    x = crs.false_easting + crs.k0 * rect_a * x
    y = crs.false_northing + crs.k0 * rect_a * y
    return np.where(bad, np.nan, x), np.where(bad, np.nan, y)


def _apply_series(xi, eta, coeffs, sign):
    """xi + sign*sum c_j sin(2j xi) cosh(2j eta) and the eta counterpart.

    sin/cos and sinh/cosh of the 2j multiples come from angle-addition and
    exp-power recurrences, so the whole series costs three transcendental
    evaluations instead of four per term.
    """
    c1 = np.cos(2.0 * xi)
    s1 = np.sin(2.0 * xi)
    ep = np.exp(2.0 * eta)
    em = 1.0 / ep
    cj, sj = c1, s1
    epj, emj = ep, em
    out_xi = xi.copy()
    out_eta = eta.copy()
    for j, coef in enumerate(coeffs, start=1):
        if j > 1:
            cj, sj = cj * c1 - sj * s1, sj * c1 + cj * s1
            epj, emj = epj * ep, emj * em
        cosh_j = 0.5 * (epj + emj)
        sinh_j = 0.5 * (epj - emj)
        out_xi += sign * coef * sj * cosh_j
        out_eta += sign * coef * cj * sinh_j
    return out_xi, out_eta


def _tm_taup(tau, e):
    sigma = np.sinh(e * np.arctanh(e * tau / np.sqrt(1.0 + tau * tau)))
    return tau * np.sqrt(1.0 + sigma * sigma) - sigma * np.sqrt(1.0 + tau * tau)


def _tm_inverse(crs: CrsDef, x, y):
    e, rect_a, _, beta = _tm_constants(crs.a, crs.f)
    eta = (np.asarray(x, dtype=float) - crs.false_easting) / (crs.k0 * rect_a)
    xi = (np.asarray(y, dtype=float) - crs.false_northing) / (crs.k0 * rect_a)
    xip, etap = _apply_series(xi, eta, beta, sign=-1.0)
    sinh_etap = np.sinh(etap)
    cos_xip = np.cos(xip)
    taup = np.sin(xip) / np.sqrt(sinh_etap ** 2 + cos_xip ** 2)
    lam = np.arctan2(sinh_etap, cos_xip)

    # Newton iteration recovering tan(lat) from its conformal counterpart;
    # converges quadratically from taup/e2m, machine precision in 2-3 steps
    e2m = 1.0 - e * e
    tau = taup / e2m
    for _ in range(6):
        taupa = _tm_taup(tau, e)
        delta = (taup - taupa) * (1.0 + e2m * tau * tau) / (
            e2m * np.sqrt(1.0 + tau * tau) * np.sqrt(1.0 + taupa * taupa)
        )
        tau = tau + delta
        if np.max(np.abs(delta)) < 1e-14:
            break
    lon = crs.lon_0 + np.degrees(lam)
    lat = np.degrees(np.arctan(tau))
    bad = ~np.isfinite(lon) | ~np.isfinite(lat) | (
        np.abs(np.degrees(lam)) > TM_MAX_DLON + 1e-9
    )
    return np.where(bad, np.nan, lon), np.where(bad, np.nan, lat)


# ---------------------------------------------------------------------------
# Albers equal-area conic (ellipsoidal)

def _albers_q(e, sinphi):
    return (1.0 - e * e) * (
        sinphi / (1.0 - (e * sinphi) ** 2)
        - np.log((1.0 - e * sinphi) / (1.0 + e * sinphi)) / (2.0 * e)
    )


@lru_cache(maxsize=None)
def _albers_constants(a: float, f: float, lat_0: float, lat_1: float, lat_2: float):
    e = math.sqrt(f * (2.0 - f))
    phi0, phi1, phi2 = (math.radians(v) for v in (lat_0, lat_1, lat_2))

    def m(phi):
        return math.cos(phi) / math.sqrt(1.0 - (e * math.sin(phi)) ** 2)

    q0, q1, q2 = (float(_albers_q(e, math.sin(p))) for p in (phi0, phi1, phi2))
    if lat_1 == lat_2:
        n = math.sin(phi1)
    else:
        n = (m(phi1) ** 2 - m(phi2) ** 2) / (q2 - q1)
    big_c = m(phi1) ** 2 + n * q1
    rho0 = a * math.sqrt(big_c - n * q0) / n
    q_pole = float(_albers_q(e, 1.0))
    # authalic-to-geodetic latitude series coefficients
    e2 = e * e
    auth = (e2 / 3 + 31 * e2**2 / 180 + 517 * e2**3 / 5040,
            23 * e2**2 / 360 + 251 * e2**3 / 3780,
            761 * e2**3 / 45360)
    return e, n, big_c, rho0, q_pole, auth


def _albers_forward(crs: CrsDef, lon, lat):
    e, n, big_c, rho0, _, _ = _albers_constants(
        crs.a, crs.f, crs.lat_0, crs.lat_1, crs.lat_2)
    lat = np.asarray(lat, dtype=float)
    bad = np.abs(lat) > 90.0
    phi = np.radians(np.where(bad, 0.0, lat))
    theta = n * np.radians(_wrap_dlon(np.asarray(lon, dtype=float) - crs.lon_0))
    q = _albers_q(e, np.sin(phi))
    rho = crs.a * np.sqrt(np.maximum(big_c - n * q, 0.0)) / n
    x = crs.false_easting + rho * np.sin(theta)
    y = crs.false_northing + rho0 - rho * np.cos(theta)
    return np.where(bad, np.nan, x), np.where(bad, np.nan, y)


def _albers_inverse(crs: CrsDef, x, y):
    e, n, big_c, rho0, q_pole, auth = _albers_constants(
        crs.a, crs.f, crs.lat_0, crs.lat_1, crs.lat_2)
    xp = np.asarray(x, dtype=float) - crs.false_easting
    yp = rho0 - (np.asarray(y, dtype=float) - crs.false_northing)
    rho = np.hypot(xp, yp)
    theta = np.arctan2(np.sign(n) * xp, np.sign(n) * yp)
    q = (big_c - (rho * n / crs.a) ** 2) / n

    # authalic latitude, then its series inverse; sin multiples come from
    # angle-addition identities rather than extra trig calls
    sin_b = np.clip(q / q_pole, -1.0, 1.0)
    beta = np.arcsin(sin_b)
    cos_b = np.sqrt(1.0 - sin_b * sin_b)
    sin2b = 2.0 * sin_b * cos_b
    cos2b = 1.0 - 2.0 * sin_b * sin_b
    sin4b = 2.0 * sin2b * cos2b
    sin6b = sin2b * (2.0 * cos2b * cos2b - 1.0) + cos2b * sin4b
    phi = beta + auth[0] * sin2b + auth[1] * sin4b + auth[2] * sin6b

    at_pole = np.abs(sin_b) >= 1.0 - 1e-15
    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(3):
            sinphi = np.sin(phi)
            esin = e * sinphi
            cosphi = np.maximum(np.cos(phi), 1e-12)
            correction = (1.0 - esin * esin) ** 2 / (2.0 * cosphi) * (
                q / (1.0 - e * e)
                - sinphi / (1.0 - esin * esin)
                + np.log((1.0 - esin) / (1.0 + esin)) / (2.0 * e)
            )
            phi = np.where(at_pole, np.sign(sin_b) * np.pi / 2.0, phi + correction)
            # Newton squares the error: a 1e-8 rad correction leaves ~1e-16,
            # so one polish round normally suffices
            if np.max(np.abs(np.where(at_pole, 0.0, correction))) < 1e-8:
                break
    lon = crs.lon_0 + np.degrees(theta / n)
    lat = np.degrees(phi)
    bad = ~np.isfinite(lon) | ~np.isfinite(lat)
    return np.where(bad, np.nan, lon), np.where(bad, np.nan, lat)


# ---------------------------------------------------------------------------
# Web Mercator (spherical, on the a-sphere) and geographic

def _webmerc_forward(crs: CrsDef, lon, lat):
    lat = np.asarray(lat, dtype=float)
    bad = np.abs(lat) >= WEBMERC_MAX_LAT
    phi = np.radians(np.where(bad, 0.0, lat))
    x = crs.a * np.radians(_wrap_dlon(np.asarray(lon, dtype=float) - crs.lon_0))
    y = crs.a * np.arctanh(np.sin(phi))
    return (np.where(bad, np.nan, x + crs.false_easting),
            np.where(bad, np.nan, y + crs.false_northing))


def _webmerc_inverse(crs: CrsDef, x, y):
    lon = crs.lon_0 + np.degrees(
        (np.asarray(x, dtype=float) - crs.false_easting) / crs.a)
    lat = np.degrees(np.arctan(
        np.sinh((np.asarray(y, dtype=float) - crs.false_northing) / crs.a)))
    return lon, lat


def _geographic_forward(crs: CrsDef, lon, lat):
    lat = np.asarray(lat, dtype=float)
    bad = np.abs(lat) > 90.0
    return (np.where(bad, np.nan, np.asarray(lon, dtype=float)),
            np.where(bad, np.nan, lat))


def _geographic_inverse(crs: CrsDef, x, y):
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


_FORWARD = {
    GEOGRAPHIC: _geographic_forward,
    TRANSVERSE_MERCATOR: _tm_forward,
    ALBERS_EQUAL_AREA: _albers_forward,
    WEB_MERCATOR: _webmerc_forward,
}
_INVERSE = {
    GEOGRAPHIC: _geographic_inverse,
    TRANSVERSE_MERCATOR: _tm_inverse,
    ALBERS_EQUAL_AREA: _albers_inverse,
    WEB_MERCATOR: _webmerc_inverse,
}


def forward_arrays(crs: CrsDef, lon, lat):
    """Lon/lat degrees -> projected x/y; NaN where out of domain."""
    return _FORWARD[crs.kind](crs, lon, lat)


def inverse_arrays(crs: CrsDef, x, y):
    """Projected x/y -> lon/lat degrees; NaN where out of domain."""
    return _INVERSE[crs.kind](crs, x, y)


def project_forward(crs: CrsDef, p: LonLat) -> ProjXY:
    x, y = forward_arrays(crs, p.lon, p.lat)
    if not (np.isfinite(x) and np.isfinite(y)):
        raise OutOfDomain(f"{p} outside the domain of {crs}")
    return ProjXY(float(x), float(y))


def project_inverse(crs: CrsDef, p: ProjXY) -> LonLat:
    lon, lat = inverse_arrays(crs, p.x, p.y)
    if not (np.isfinite(lon) and np.isfinite(lat)):
        raise OutOfDomain(f"{p} outside the domain of {crs}")
    return LonLat(float(lon), float(lat))


def transform_arrays(src: CrsDef, dst: CrsDef, x, y):
    """Bulk CRS-to-CRS point transform; identity is short-circuited bit-stably."""
    if equivalent(src, dst):
        return np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    lon, lat = inverse_arrays(src, x, y)
    return forward_arrays(dst, lon, lat)


def transform_point(src: CrsDef, dst: CrsDef, p: ProjXY) -> ProjXY:
    if equivalent(src, dst):
        return p
    x, y = transform_arrays(src, dst, p.x, p.y)
    if not (np.isfinite(x) and np.isfinite(y)):
        raise OutOfDomain(f"{p} cannot be transformed {src} -> {dst}")
    return ProjXY(float(x), float(y))


def _edge_points(b: BoundingBox, densify_n: int):
    t = np.linspace(0.0, 1.0, densify_n)
    xs = b.minx + t * (b.maxx - b.minx)
    ys = b.miny + t * (b.maxy - b.miny)
    ex = np.concatenate([xs, xs, np.full(densify_n, b.minx), np.full(densify_n, b.maxx)])
    ey = np.concatenate([np.full(densify_n, b.miny), np.full(densify_n, b.maxy), ys, ys])
    return ex, ey


def transform_bbox(src: CrsDef, dst: CrsDef, b: BoundingBox,
                   densify_n: int = 21) -> BoundingBox:
    """Axis-aligned hull of the transformed box boundary.

    densify_n points are transformed along each edge so the hull captures
    edge curvature; the time interval passes through unchanged.
    """
    if densify_n < 2:
        raise ValueError("densify_n must be >= 2")
    if equivalent(src, dst):
        return b
    ex, ey = _edge_points(b, densify_n)
    tx, ty = transform_arrays(src, dst, ex, ey)
    if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(ty))):
        raise OutOfDomain(f"box {b} leaves the domain of {src} -> {dst}")
    return BoundingBox(float(tx.min()), float(tx.max()),
                       float(ty.min()), float(ty.max()), b.mint, b.maxt)


def transform_bbox_finite(src: CrsDef, dst: CrsDef, b: BoundingBox,
                          densify_n: int = 21) -> BoundingBox | None:
    """Hull over the finite transformed boundary points; None if all invalid.

    Tolerant variant used by the warp path, where out-of-domain pixels become
    invalid data rather than query failures.
    """
    if equivalent(src, dst):
        return b
    ex, ey = _edge_points(b, densify_n)
    tx, ty = transform_arrays(src, dst, ex, ey)
    ok = np.isfinite(tx) & np.isfinite(ty)
    if not ok.any():
        return None
    return BoundingBox(float(tx[ok].min()), float(tx[ok].max()),
                       float(ty[ok].min()), float(ty[ok].max()), b.mint, b.maxt)


def utm_crs_for(lon: float, north: bool = True) -> CrsDef:
    """UTM zone CRS containing the given longitude."""
    zone = int(math.floor((lon + 180.0) / 6.0)) % 60 + 1
    return crs_from_epsg((32600 if north else 32700) + zone)
