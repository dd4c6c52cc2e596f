"""Urban line-of-sight simulator: random city layouts, Monte Carlo P_LoS(theta)
between an aerial base station and ground users, and sigmoid curve fits."""

__version__ = "0.1.0"
