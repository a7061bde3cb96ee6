"""Physical constants shared across the simulator.

All geometry uses a spherical Earth of radius R_EARTH_KM; the equatorial
radius appears only inside the secular J2 drift coefficient.
"""

R_EARTH_KM = 6371.0            # mean spherical Earth radius
R_EQUATOR_KM = 6378.137        # equatorial radius, J2 coefficient only
MU_KM3_S2 = 398600.4418        # geocentric gravitational parameter
J2 = 1.08263e-3                # second zonal harmonic
OMEGA_EARTH_RAD_S = 7.2921159e-5   # sidereal rotation rate
SPEED_OF_LIGHT_M_S = 299792458.0
BOLTZMANN_J_K = 1.380649e-23
