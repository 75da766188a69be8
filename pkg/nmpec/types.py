from enum import Enum


class RunMode(Enum):
    NOISY_ONLY  = "noisy-only"  # NMSSE ensemble without recovery operations
    MITIGATED   = "mitigated"   # full quasi-probability loop
    BOTH        = "both"        # both ensembles on disjoint random streams

    @property
    def noisy(self) -> bool:
        return self in (RunMode.NOISY_ONLY, RunMode.BOTH)

    @property
    def mitigated(self) -> bool:
        return self in (RunMode.MITIGATED, RunMode.BOTH)


class OperationKind(Enum):
    UNITARY     = "unitary"     # conjugation by a unitary
    PROJECTIVE  = "projective"  # contains the projector |0><0| on at least one qubit


class HistoryMode(Enum):
    POST        = "post"        # memory integral sees the state after the basis operation
    PRE         = "pre"         # memory integral keeps the state before the basis operation


class ExactMethod(Enum):
    ENUMERATE   = "enumerate"   # explicit sum over all index vectors
    FACTORIZED  = "factorized"  # same sum evaluated step by step


# Random stream identifiers, disjoint per ensemble
NOISY_STREAM        = 1
MITIGATED_STREAM    = 2
NOISE_PATH_STREAM   = 3
