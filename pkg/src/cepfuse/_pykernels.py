"""Pure-Python versions of the hot correlation kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``CEPFUSE_PURE_PYTHON`` is set.  Both backends must return identical results.
"""

from __future__ import annotations

import math

EARTH_RADIUS_KM = 6371.0088
_DEG = math.pi / 180.0
_INF = math.inf

_sin = math.sin
_cos = math.cos
_asin = math.asin
_sqrt = math.sqrt


def haversine_km(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    s1 = _sin((lat2 - lat1) * _DEG * 0.5)
    s2 = _sin((lon2 - lon1) * _DEG * 0.5)
    h = s1 * s1 + _cos(lat1 * _DEG) * _cos(lat2 * _DEG) * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * _asin(_sqrt(h))


def scan(ts, lat, lon, lo, hi, e_ts, e_lat, e_lon, dt_lt, km_lt, ms_per_unit, km_per_unit):
    """Indices in ``[lo, hi)`` whose entries pass the strict time/distance bounds.

    ``ts``/``lat``/``lon`` are parallel sequences; a bound of ``inf`` disables
    that check.
    """
    out = []
    check_time = dt_lt != _INF
    check_dist = km_lt != _INF
    if check_dist:
        cos_e = _cos(e_lat * _DEG)
    for i in range(lo, hi):
        if check_time and abs(ts[i] - e_ts) / ms_per_unit >= dt_lt:
            continue
        if check_dist:
            la = lat[i]
            s1 = _sin((la - e_lat) * _DEG * 0.5)
            s2 = _sin((lon[i] - e_lon) * _DEG * 0.5)
            h = s1 * s1 + cos_e * _cos(la * _DEG) * s2 * s2
            if h > 1.0:
                h = 1.0
            if 2.0 * EARTH_RADIUS_KM * _asin(_sqrt(h)) / km_per_unit >= km_lt:
                continue
        out.append(i)
    return out
