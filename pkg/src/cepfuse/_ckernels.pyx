# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot correlation kernels (see ``_pykernels``)."""

from libc.math cimport sin, cos, asin, sqrt, INFINITY, M_PI

cdef double EARTH_RADIUS_KM = 6371.0088
cdef double _DEG = M_PI / 180.0


cdef inline double _hav(double lat1, double lon1, double lat2, double lon2, double cos1) nogil:
    cdef double s1 = sin((lat2 - lat1) * _DEG * 0.5)
    cdef double s2 = sin((lon2 - lon1) * _DEG * 0.5)
    cdef double h = s1 * s1 + cos1 * cos(lat2 * _DEG) * s2 * s2
    if h > 1.0:
        h = 1.0
    return 2.0 * EARTH_RADIUS_KM * asin(sqrt(h))


def haversine_km(double lat1, double lon1, double lat2, double lon2):
    return _hav(lat1, lon1, lat2, lon2, cos(lat1 * _DEG))


def scan(const long long[:] ts, const double[:] lat, const double[:] lon,
         Py_ssize_t lo, Py_ssize_t hi, long long e_ts, double e_lat, double e_lon,
         double dt_lt, double km_lt, double ms_per_unit, double km_per_unit):
    cdef list out = []
    cdef Py_ssize_t i
    cdef long long d
    cdef bint check_time = dt_lt != INFINITY
    cdef bint check_dist = km_lt != INFINITY
    cdef double cos_e = cos(e_lat * _DEG)
    for i in range(lo, hi):
        if check_time:
            d = ts[i] - e_ts
            if d < 0:
                d = -d
            if <double>d / ms_per_unit >= dt_lt:
                continue
        if check_dist:
            if _hav(e_lat, e_lon, lat[i], lon[i], cos_e) / km_per_unit >= km_lt:
                continue
        out.append(i)
    return out
