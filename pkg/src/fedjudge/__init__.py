"""Poisoning-resistant federated learning with an elected anomaly judge.

Clients train local classifiers, elect an isolation-forest judge through
homomorphically tallied encrypted ballots, screen every model update against
the judge, and aggregate only majority-accepted updates — with every step
recorded on a signed hash-linked ledger.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    AuthenticationError,
    ConfigError,
    FedJudgeError,
    InputError,
    OrderingError,
    ProtocolError,
)
