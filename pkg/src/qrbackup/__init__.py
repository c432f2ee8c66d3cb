"""Indirect-permission key backup.

The owner keeps the encrypted secret; permission to decrypt it (a random key)
is threshold-split and sealed to trustees' public keys.
"""

from .analysis import (
    AdversaryModel,
    AnalysisParams,
    FailureReport,
    attack_success_approx,
    attack_success_exact,
    combined_failure,
    comparison_table,
    default_params,
    optimal_threshold,
    recovery_unreliability,
    scenario_success_probability,
    simulate_attack,
)
from .bundle import (
    BackupBundle,
    Mode,
    RecoveryInstruction,
    VerificationPolicy,
    armor,
    dearmor,
    decode_bundle,
    encode_bundle,
)
from .crypto import KeyPair, PublicKey, generate_identity_keypair
from .entropy import SeededRandomness, system_randomness
from .gf256 import Share, combine, split
from .protocol import (
    InMemoryDirectory,
    RecoverySession,
    Refusal,
    RefusalReason,
    ShareResponse,
    TrusteeDescriptor,
    Verdict,
    absorb_response,
    create_backup,
    finish_recovery,
    open_recovery_session,
    renew_backup,
    renewal_check,
    trustee_handle_request,
)

__version__ = "0.1.0"


__all__ = [
    "AdversaryModel",
    "AnalysisParams",
    "BackupBundle",
    "FailureReport",
    "InMemoryDirectory",
    "KeyPair",
    "Mode",
    "PublicKey",
    "RecoveryInstruction",
    "RecoverySession",
    "Refusal",
    "RefusalReason",
    "SeededRandomness",
    "Share",
    "ShareResponse",
    "TrusteeDescriptor",
    "Verdict",
    "VerificationPolicy",
    "absorb_response",
    "armor",
    "attack_success_approx",
    "attack_success_exact",
    "combine",
    "combined_failure",
    "comparison_table",
    "create_backup",
    "dearmor",
    "decode_bundle",
    "default_params",
    "encode_bundle",
    "finish_recovery",
    "generate_identity_keypair",
    "open_recovery_session",
    "optimal_threshold",
    "recovery_unreliability",
    "renew_backup",
    "renewal_check",
    "scenario_success_probability",
    "simulate_attack",
    "split",
    "system_randomness",
    "trustee_handle_request",
]
