"""WGS-84 geodesic distance and small tangent-plane helpers.

The primary path is Vincenty's inverse solution on the auxiliary sphere with
series correction, good to well under a millimeter at the sub-200-km scales
this package works at.  Near-antipodal pairs, where Vincenty's lambda
iteration stalls, fall back to a slower but convergent solver that evaluates
the exact auxiliary-sphere integrals by adaptive Simpson quadrature and
bisects on the starting azimuth.
"""

from __future__ import annotations

import math

WGS84_A = 6378137.0
WGS84_F = 1 / 298.257223563
WGS84_B = WGS84_A * (1 - WGS84_F)
_E2 = WGS84_F * (2 - WGS84_F)           # first eccentricity squared
_EP2 = _E2 / (1 - _E2)                  # second eccentricity squared

_VINCENTY_TOL = 1e-13
_VINCENTY_MAX_ITER = 200


def geodesic_distance(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Length in meters of the geodesic between two WGS-84 coordinates."""
    if (lat1, lon1) == (lat2, lon2):
        return 0.0
    result = _vincenty_inverse(lat1, lon1, lat2, lon2)
    if result is not None:
        return result
    return _antipodal_distance(lat1, lon1, lat2, lon2)


def _vincenty_inverse(lat1, lon1, lat2, lon2):
    L = math.radians(lon2 - lon1)
    u1 = math.atan((1 - WGS84_F) * math.tan(math.radians(lat1)))
    u2 = math.atan((1 - WGS84_F) * math.tan(math.radians(lat2)))
    su1, cu1 = math.sin(u1), math.cos(u1)
    su2, cu2 = math.sin(u2), math.cos(u2)

    lam = L
    for _ in range(_VINCENTY_MAX_ITER):
        sl, cl = math.sin(lam), math.cos(lam)
        sin_sigma = math.hypot(cu2 * sl, cu1 * su2 - su1 * cu2 * cl)
        if sin_sigma == 0.0:
            return 0.0  # coincident
        cos_sigma = su1 * su2 + cu1 * cu2 * cl
        sigma = math.atan2(sin_sigma, cos_sigma)
        sin_alpha = cu1 * cu2 * sl / sin_sigma
        cos2_alpha = 1 - sin_alpha * sin_alpha
        if cos2_alpha == 0.0:
            cos_2sm = 0.0  # equatorial geodesic
        else:
            cos_2sm = cos_sigma - 2 * su1 * su2 / cos2_alpha
        C = WGS84_F / 16 * cos2_alpha * (4 + WGS84_F * (4 - 3 * cos2_alpha))
        lam_prev = lam
        lam = L + (1 - C) * WGS84_F * sin_alpha * (
            sigma + C * sin_sigma * (cos_2sm + C * cos_sigma * (-1 + 2 * cos_2sm * cos_2sm))
        )
        if abs(lam - lam_prev) < _VINCENTY_TOL:
            break
    else:
        return None  # near-antipodal: let the caller fall back

    u_sq = cos2_alpha * (WGS84_A**2 - WGS84_B**2) / WGS84_B**2
    A = 1 + u_sq / 16384 * (4096 + u_sq * (-768 + u_sq * (320 - 175 * u_sq)))
    B = u_sq / 1024 * (256 + u_sq * (-128 + u_sq * (74 - 47 * u_sq)))
    d_sigma = B * sin_sigma * (
        cos_2sm
        + B / 4 * (
            cos_sigma * (-1 + 2 * cos_2sm * cos_2sm)
            - B / 6 * cos_2sm * (-3 + 4 * sin_sigma * sin_sigma) * (-3 + 4 * cos_2sm * cos_2sm)
        )
    )
    return WGS84_B * A * (sigma - d_sigma)


# --- antipodal fallback: exact integrals on the auxiliary sphere ------------


def _adaptive_simpson(func, lo, hi, tol=1e-12, depth=40):
    def simpson(a, b, fa, fm, fb):
        return (b - a) / 6 * (fa + 4 * fm + fb)

    def recurse(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        flm, frm = func(0.5 * (a + m)), func(0.5 * (m + b))
        left = simpson(a, m, fa, flm, fm)
        right = simpson(m, b, fm, frm, fb)
        if depth <= 0 or abs(left + right - whole) < 15 * tol:
            return left + right + (left + right - whole) / 15
        return recurse(a, m, fa, flm, fm, left, tol / 2, depth - 1) + recurse(
            m, b, fm, frm, fb, right, tol / 2, depth - 1
        )

    fa, fb, fm = func(lo), func(hi), func(0.5 * (lo + hi))
    return recurse(lo, hi, fa, fm, fb, simpson(lo, hi, fa, fm, fb), tol, depth)


def _arc_integral(sigma1, sigma2, k2):
    return _adaptive_simpson(
        lambda s: math.sqrt(1 + k2 * math.sin(s) ** 2), sigma1, sigma2
    )


def _lambda_integral(sigma1, sigma2, k2):
    return _adaptive_simpson(
        lambda s: (2 - WGS84_F) / (1 + (1 - WGS84_F) * math.sqrt(1 + k2 * math.sin(s) ** 2)),
        sigma1,
        sigma2,
    )


def _sphere_geometry(alpha1, beta1, beta2):
    """Given the azimuth at point 1, place both points on the great circle.

    Returns (lambda12, sigma1, sigma2, k2) on the auxiliary sphere under the
    canonical arrangement beta1 <= 0, |beta2| <= |beta1|.
    """
    sb1, cb1 = math.sin(beta1), math.cos(beta1)
    sb2, cb2 = math.sin(beta2), math.cos(beta2)
    sin_alpha0 = math.sin(alpha1) * cb1
    cos_alpha0 = math.sqrt(1 - sin_alpha0**2)
    sigma1 = math.atan2(sb1, math.cos(alpha1) * cb1)
    # Clairaut fixes |alpha2|; the canonical arrangement picks the branch
    # with cos(alpha2) >= 0.
    cos_alpha2 = math.sqrt(max(0.0, math.cos(alpha1) ** 2 * cb1**2 + (cb2**2 - cb1**2))) / cb2
    sigma2 = math.atan2(sb2, cos_alpha2 * cb2)
    omega1 = math.atan2(sin_alpha0 * math.sin(sigma1), math.cos(sigma1))
    omega2 = math.atan2(sin_alpha0 * math.sin(sigma2), math.cos(sigma2))
    k2 = _EP2 * cos_alpha0**2
    lam12 = (omega2 - omega1) - WGS84_F * sin_alpha0 * _lambda_integral(sigma1, sigma2, k2)
    return lam12, sigma1, sigma2, k2


def _antipodal_distance(lat1, lon1, lat2, lon2):
    beta1 = math.atan((1 - WGS84_F) * math.tan(math.radians(lat1)))
    beta2 = math.atan((1 - WGS84_F) * math.tan(math.radians(lat2)))
    lam_target = math.radians(lon2 - lon1)
    lam_target = math.atan2(math.sin(lam_target), math.cos(lam_target))
    # Canonicalize: point 1 is the southern, |beta1| >= |beta2|, lambda >= 0.
    if abs(beta1) < abs(beta2):
        beta1, beta2 = beta2, beta1
    if beta1 > 0:
        beta1, beta2 = -beta1, -beta2
    lam_target = abs(lam_target)

    def mismatch(alpha1):
        lam, _, _, _ = _sphere_geometry(alpha1, beta1, beta2)
        return lam - lam_target

    lo, hi = 1e-12, math.pi - 1e-12
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo > 0 or f_hi < 0:  # degenerate bracketing: meridional or equatorial
        alpha1 = lo if abs(f_lo) < abs(f_hi) else hi
    else:
        for _ in range(200):
            alpha1 = 0.5 * (lo + hi)
            if mismatch(alpha1) < 0:
                lo = alpha1
            else:
                hi = alpha1
            if hi - lo < 1e-14:
                break
        alpha1 = 0.5 * (lo + hi)
    _, sigma1, sigma2, k2 = _sphere_geometry(alpha1, beta1, beta2)
    return WGS84_B * _arc_integral(sigma1, sigma2, k2)


# --- local tangent-plane helpers --------------------------------------------


def meters_per_degree(lat: float) -> tuple[float, float]:
    """(meters per degree latitude, meters per degree longitude) at ``lat``."""
    phi = math.radians(lat)
    sin2 = math.sin(phi) ** 2
    m_radius = WGS84_A * (1 - _E2) / (1 - _E2 * sin2) ** 1.5
    n_radius = WGS84_A / math.sqrt(1 - _E2 * sin2)
    return (
        m_radius * math.pi / 180.0,
        n_radius * math.cos(phi) * math.pi / 180.0,
    )


def offset_point(lat: float, lon: float, north_m: float, east_m: float) -> tuple[float, float]:
    """Displace a coordinate by meters in the local tangent plane."""
    per_lat, per_lon = meters_per_degree(lat)
    return lat + north_m / per_lat, lon + east_m / per_lon
