"""WGS84 <-> UTM zone 17N conversion (EPSG:32617).

Forward and inverse transverse Mercator on the WGS84 ellipsoid using the
Krueger series in the third flattening n, carried to n^6 (sub-millimeter
inside the zone). Functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import math

import numpy as np

# WGS84 ellipsoid
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563

# UTM zone 17N parameters
CENTRAL_MERIDIAN_DEG = -81.0
SCALE_FACTOR = 0.9996
FALSE_EASTING = 500000.0
FALSE_NORTHING = 0.0

# Longitude band accepted for the study area (zone 17 +/- one degree of slack)
LON_MIN_DEG = -84.0
LON_MAX_DEG = -78.0
LAT_MIN_DEG = 0.0
LAT_MAX_DEG = 84.0

_N = WGS84_F / (2.0 - WGS84_F)
_E2 = WGS84_F * (2.0 - WGS84_F)
_E = math.sqrt(_E2)

# Rectifying radius: A = a/(1+n) * (1 + n^2/4 + n^4/64 + n^6/256)
_RECT_RADIUS = (WGS84_A / (1.0 + _N)
                * (1.0 + _N ** 2 / 4.0 + _N ** 4 / 64.0 + _N ** 6 / 256.0))

_ALPHA = (
    _N / 2 - 2 * _N ** 2 / 3 + 5 * _N ** 3 / 16 + 41 * _N ** 4 / 180
    - 127 * _N ** 5 / 288 + 7891 * _N ** 6 / 37800,
    13 * _N ** 2 / 48 - 3 * _N ** 3 / 5 + 557 * _N ** 4 / 1440
    + 281 * _N ** 5 / 630 - 1983433 * _N ** 6 / 1935360,
    61 * _N ** 3 / 240 - 103 * _N ** 4 / 140 + 15061 * _N ** 5 / 26880
    + 167603 * _N ** 6 / 181440,
    49561 * _N ** 4 / 161280 - 179 * _N ** 5 / 168 + 6601661 * _N ** 6 / 7257600,
    34729 * _N ** 5 / 80640 - 3418889 * _N ** 6 / 1995840,
    212378941 * _N ** 6 / 319334400,
)

_BETA = (
    _N / 2 - 2 * _N ** 2 / 3 + 37 * _N ** 3 / 96 - _N ** 4 / 360
    - 81 * _N ** 5 / 512 + 96199 * _N ** 6 / 604800,
    _N ** 2 / 48 + _N ** 3 / 15 - 437 * _N ** 4 / 1440 + 46 * _N ** 5 / 105
    - 1118711 * _N ** 6 / 3870720,
    17 * _N ** 3 / 480 - 37 * _N ** 4 / 840 - 209 * _N ** 5 / 4480
    + 5569 * _N ** 6 / 90720,
    4397 * _N ** 4 / 161280 - 11 * _N ** 5 / 504 - 830251 * _N ** 6 / 7257600,
    4583 * _N ** 5 / 161280 - 108847 * _N ** 6 / 3991680,
    20648693 * _N ** 6 / 638668800,
)


class ProjectionDomainError(ValueError):
    """Input coordinates outside the accepted zone 17N band."""


def _check_domain(lat, lon):
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    bad = ((lon < LON_MIN_DEG) | (lon > LON_MAX_DEG)
           | (lat < LAT_MIN_DEG) | (lat > LAT_MAX_DEG)
           | ~np.isfinite(lat) | ~np.isfinite(lon))
    if bad.any():
        i = int(np.argmax(bad))
        raise ProjectionDomainError(
            f"point (lat={float(lat.reshape(-1)[i] if lat.ndim else lat)}, "
            f"lon={float(lon.reshape(-1)[i] if lon.ndim else lon)}) outside "
            f"UTM 17N band lon [{LON_MIN_DEG}, {LON_MAX_DEG}], "
            f"lat [{LAT_MIN_DEG}, {LAT_MAX_DEG}]")
    return lat, lon


def wgs84_to_utm17n(lat, lon):
    """Project WGS84 degrees to UTM 17N (easting, northing) meters.

    Accepts scalars or arrays; raises ProjectionDomainError when any point
    falls outside the accepted longitude/latitude band.
    """
    lat, lon = _check_domain(lat, lon)
    scalar = lat.ndim == 0 and lon.ndim == 0

    phi = np.radians(lat)
    dlam = np.radians(lon - CENTRAL_MERIDIAN_DEG)

    sin_phi = np.sin(phi)
    # conformal latitude tangent: t = sinh(atanh(sin phi) - e * atanh(e sin phi))
    t = np.sinh(np.arctanh(sin_phi) - _E * np.arctanh(_E * sin_phi))

    xi = np.arctan2(t, np.cos(dlam))
    eta = np.arcsinh(np.sin(dlam) / np.hypot(t, np.cos(dlam)))

    xi_sum = xi.copy()
    eta_sum = eta.copy()
    for j, a in enumerate(_ALPHA, start=1):
        xi_sum = xi_sum + a * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
        eta_sum = eta_sum + a * np.cos(2 * j * xi) * np.sinh(2 * j * eta)

    easting = FALSE_EASTING + SCALE_FACTOR * _RECT_RADIUS * eta_sum
    northing = FALSE_NORTHING + SCALE_FACTOR * _RECT_RADIUS * xi_sum
    if scalar:
        return float(easting), float(northing)
    return easting, northing


def utm17n_to_wgs84(easting, northing):
    """Invert UTM 17N meters back to WGS84 (lat, lon) degrees."""
    easting = np.asarray(easting, dtype=np.float64)
    northing = np.asarray(northing, dtype=np.float64)
    scalar = easting.ndim == 0 and northing.ndim == 0

    xi = (northing - FALSE_NORTHING) / (SCALE_FACTOR * _RECT_RADIUS)
    eta = (easting - FALSE_EASTING) / (SCALE_FACTOR * _RECT_RADIUS)

    xi_p = xi.copy()
    eta_p = eta.copy()
    for j, b in enumerate(_BETA, start=1):
        xi_p = xi_p - b * np.sin(2 * j * xi) * np.cosh(2 * j * eta)
        eta_p = eta_p - b * np.cos(2 * j * xi) * np.sinh(2 * j * eta)

    # tangent of the conformal latitude
    tau_p = np.sin(xi_p) / np.hypot(np.sinh(eta_p), np.cos(xi_p))

    # Newton-invert tau' = tau sqrt(1+sigma^2) - sigma sqrt(1+tau^2)
    tau = tau_p.copy()
    for _ in range(6):
        sigma = np.sinh(_E * np.arctanh(_E * tau / np.hypot(1.0, tau)))
        f = tau * np.hypot(1.0, sigma) - sigma * np.hypot(1.0, tau) - tau_p
        deriv = ((np.hypot(1.0, sigma) * np.hypot(1.0, tau)
                  - sigma * tau) * (1.0 - _E2)
                 * np.hypot(1.0, tau) / (1.0 + (1.0 - _E2) * tau * tau))
        tau = tau - f / deriv

    lat = np.degrees(np.arctan(tau))
    lon = CENTRAL_MERIDIAN_DEG + np.degrees(
        np.arctan2(np.sinh(eta_p), np.cos(xi_p)))
    if scalar:
        return float(lat), float(lon)
    return lat, lon
