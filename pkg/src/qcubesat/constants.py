"""Physical constants and mission-wide defaults (SI units unless the name says otherwise)."""

from datetime import datetime, timezone

MU_EARTH = 3.986004418e14  # m^3/s^2
R_EARTH_EQ = 6378137.0  # m, J2 reference radius
R_EARTH = 6371000.0  # m, spherical Earth for geometry, altitude and shadow
J2 = 1.08262668e-3
OMEGA_EARTH = 7.2921150e-5  # rad/s, sidereal rotation
C_LIGHT = 299792458.0  # m/s

SECONDS_PER_DAY = 86400.0
DAYS_PER_YEAR = 365.25
SECONDS_PER_YEAR = SECONDS_PER_DAY * DAYS_PER_YEAR

J2000 = datetime(2000, 1, 1, 12, 0, 0, tzinfo=timezone.utc)
OBLIQUITY_DEG = 23.44

# Q1-2018 deployment from the ISS
DEFAULT_START = datetime(2018, 1, 1, tzinfo=timezone.utc)

DEORBIT_FLOOR_M = 120e3
LIFETIME_CAP_YEARS = 100.0
