"""Running-consensus decentralized inference toolkit.

Gossip-based state recursions with simultaneous sensing and communication,
an ideal fusion-center benchmark, fixed-sample-size / sequential / quickest
change detectors built on top, closed-form operating characteristics, and a
seeded Monte Carlo engine that checks every prediction at desk scale.
"""

from . import analysis, consensus, detectors, montecarlo, network, stats

__all__ = ["analysis", "consensus", "detectors", "montecarlo", "network", "stats"]

__version__ = "0.1.0"
