"""Finite-stage audits of c.p.c. systems built from Følner sets of amenable groups."""
from .audit import (DefectReport, StageSchedule, bullet_product, defect_associativity,
                    defect_cstar_identity, defect_multiplicative, defect_stinespring,
                    norm_limit_check, product_vs_oracle, psi_mult_defect,
                    stinespring_lemma_check)
from .config import AuditConfig, audit_preset, build_system, run_audit
from .cpmaps import CpMap, compose, amplify, verify_contractive, verify_cp
from .errors import (ConfigError, ContractViolation, DomainError, ParameterError,
                     PreconditionError, ShapeError, StepRejected)
from .fdcstar import AlgElement, FiniteDimCstar, norm
from .folner_system import ApproximationSystem, CpcSystem, build_cpc_from_maps
from .groupalg import GroupAlgebraElement, NormEnclosure, convolve, delta, reduced_norm
from .groups import (FiniteGroup, FolnerSet, FolnerSequence, IntegerLattice, box_folner,
                     extract_summable, folner_defect, summability_lhs)

__version__ = "0.1.0"
