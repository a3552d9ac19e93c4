"""Contest & Justify deliberation state machine.

States: open -> justified -> accepted | recontested; recontested -> justified
(next round) while rounds remain, else escalated; escalated -> resolved.
Accepted and resolved are terminal. Role checks run before state checks;
optimistic concurrency uses a monotone version counter.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Container

from .errors import CongaitError
from .justify import Justification

DEFAULT_MAX_ROUNDS = 2


class ArgumentType(str, Enum):
    FACTUAL_ERROR = "factual_error"
    NORMATIVE_CONFLICT = "normative_conflict"
    REASONING_FLAW = "reasoning_flaw"


ARGUMENT_TYPE_DEFINITIONS = {
    ArgumentType.FACTUAL_ERROR: "incorrect input",
    ArgumentType.NORMATIVE_CONFLICT: "mismatch with clinical context",
    ArgumentType.REASONING_FLAW: "implausible attribution",
}


class Role(str, Enum):
    CLINICIAN = "clinician"
    SYSTEM_DELEGATE = "system_delegate"
    REVIEWER = "reviewer"
    ADMIN = "admin"


class ContestState(str, Enum):
    OPEN = "open"
    JUSTIFIED = "justified"
    ACCEPTED = "accepted"
    RECONTESTED = "recontested"
    ESCALATED = "escalated"
    RESOLVED = "resolved"


TERMINAL_STATES = frozenset({ContestState.ACCEPTED, ContestState.RESOLVED})


class VerdictKind(str, Enum):
    UPHELD = "upheld"
    OVERTURNED = "overturned"
    AMENDED = "amended"


@dataclass(frozen=True)
class Verdict:
    kind: VerdictKind
    new_stage: float | None = None

    def __post_init__(self) -> None:
        if self.kind is VerdictKind.AMENDED and self.new_stage is None:
            raise ValueError("amended verdict requires the corrected stage")
        if self.kind is not VerdictKind.AMENDED and self.new_stage is not None:
            raise ValueError("only amended verdicts carry a corrected stage")


class IllegalTransition(CongaitError):
    def __init__(self, state: ContestState, operation: str) -> None:
        self.state = state
        self.operation = operation
        super().__init__(f"operation {operation!r} is illegal in state {state.value!r}")


class ForbiddenRole(CongaitError):
    def __init__(self, role: Role, operation: str) -> None:
        self.role = role
        self.operation = operation
        super().__init__(f"role {role.value!r} may not perform {operation!r}")


class EmptyNote(CongaitError):
    def __init__(self) -> None:
        super().__init__("a contest note must not be empty")


class UnknownPrediction(CongaitError):
    def __init__(self, prediction_id: str) -> None:
        self.prediction_id = prediction_id
        super().__init__(f"no such prediction: {prediction_id}")


class RoundMismatch(CongaitError):
    def __init__(self, expected: int, got: int) -> None:
        super().__init__(f"justification round {got} does not match case round {expected}")


class StaleCase(CongaitError):
    def __init__(self, expected: int, actual: int) -> None:
        super().__init__(
            f"case version {actual} does not match expected {expected}; reload and retry")


@dataclass(frozen=True)
class ContestCase:
    case_id: str
    prediction_id: str
    state: ContestState
    argument_type: ArgumentType
    notes: tuple[str, ...]
    justifications: tuple[Justification, ...]
    round: int
    max_rounds: int = DEFAULT_MAX_ROUNDS
    verdict: Verdict | None = None
    version: int = 0
    opened_by: str = ""
    opened_at: str = ""

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


def _check_version(case: ContestCase, expected_version: int | None) -> None:
    if expected_version is not None and expected_version != case.version:
        raise StaleCase(expected_version, case.version)


def open_contest(prediction_id: str, argument_type: ArgumentType | str, note: str,
                 author: Role, *, known_predictions: Container[str],
                 case_id: str, max_rounds: int = DEFAULT_MAX_ROUNDS,
                 opened_by: str = "", opened_at: str = "") -> ContestCase:
    """Open a new deliberation case on a prediction (clinician only)."""
    if author is not Role.CLINICIAN:
        raise ForbiddenRole(author, "open_contest")
    if prediction_id not in known_predictions:
        raise UnknownPrediction(prediction_id)
    if not note or not note.strip():
        raise EmptyNote()
    return ContestCase(
        case_id=case_id,
        prediction_id=prediction_id,
        state=ContestState.OPEN,
        argument_type=ArgumentType(argument_type),
        notes=(note,),
        justifications=(),
        round=1,
        max_rounds=max_rounds,
        version=0,
        opened_by=opened_by,
        opened_at=opened_at,
    )


def attach_justification(case: ContestCase, justification: Justification,
                         author: Role = Role.SYSTEM_DELEGATE, *,
                         expected_version: int | None = None) -> ContestCase:
    """System delegate answers an open or re-contested case."""
    if author is not Role.SYSTEM_DELEGATE:
        raise ForbiddenRole(author, "attach_justification")
    _check_version(case, expected_version)
    if case.state not in (ContestState.OPEN, ContestState.RECONTESTED):
        raise IllegalTransition(case.state, "attach_justification")
    if justification.round != case.round:
        raise RoundMismatch(case.round, justification.round)
    return replace(case,
                   state=ContestState.JUSTIFIED,
                   justifications=case.justifications + (justification,),
                   version=case.version + 1)


def clinician_decision(case: ContestCase, decision: str, author: Role,
                       note: str | None = None, *,
                       expected_version: int | None = None) -> ContestCase:
    """Accept the justification or contest it again.

    Re-contesting below the round cap advances the round; at the cap the case
    escalates to a reviewer instead.
    """
    if author is not Role.CLINICIAN:
        raise ForbiddenRole(author, "clinician_decision")
    _check_version(case, expected_version)
    if case.state is not ContestState.JUSTIFIED:
        raise IllegalTransition(case.state, "clinician_decision")
    if decision == "accept":
        return replace(case, state=ContestState.ACCEPTED, version=case.version + 1)
    if decision == "recontest":
        if not note or not note.strip():
            raise EmptyNote()
        if case.round < case.max_rounds:
            return replace(case,
                           state=ContestState.RECONTESTED,
                           round=case.round + 1,
                           notes=case.notes + (note,),
                           version=case.version + 1)
        return replace(case,
                       state=ContestState.ESCALATED,
                       notes=case.notes + (note,),
                       version=case.version + 1)
    raise ValueError(f"unknown decision {decision!r}")


def resolve_escalation(case: ContestCase, verdict: Verdict, author: Role, *,
                       expected_version: int | None = None) -> ContestCase:
    """Reviewer closes an escalated case with a verdict."""
    if author is not Role.REVIEWER:
        raise ForbiddenRole(author, "resolve_escalation")
    _check_version(case, expected_version)
    if case.state is not ContestState.ESCALATED:
        raise IllegalTransition(case.state, "resolve_escalation")
    return replace(case,
                   state=ContestState.RESOLVED,
                   verdict=verdict,
                   version=case.version + 1)


OPERATIONS = ("open_contest", "attach_justification", "clinician_decision",
              "resolve_escalation")

_OPERATION_ROLES = {
    "open_contest": Role.CLINICIAN,
    "attach_justification": Role.SYSTEM_DELEGATE,
    "clinician_decision": Role.CLINICIAN,
    "resolve_escalation": Role.REVIEWER,
}

_OPERATION_STATES = {
    "open_contest": frozenset(),  # never legal on an existing case
    "attach_justification": frozenset({ContestState.OPEN, ContestState.RECONTESTED}),
    "clinician_decision": frozenset({ContestState.JUSTIFIED}),
    "resolve_escalation": frozenset({ContestState.ESCALATED}),
}


def check_operation(state: ContestState, operation: str, role: Role) -> None:
    """Raise the error the transition table assigns to an illegal triple.

    Role is validated before state, matching the transition functions.
    """
    if operation not in _OPERATION_ROLES:
        raise ValueError(f"unknown operation {operation!r}")
    if role is not _OPERATION_ROLES[operation]:
        raise ForbiddenRole(role, operation)
    if state not in _OPERATION_STATES[operation]:
        raise IllegalTransition(state, operation)


def legal_actions(state: ContestState, role: Role) -> frozenset[str]:
    """Actions a role may take on a case in the given state."""
    actions = set()
    if state in (ContestState.OPEN, ContestState.RECONTESTED) \
            and role is Role.SYSTEM_DELEGATE:
        actions.add("attach_justification")
    if state is ContestState.JUSTIFIED and role is Role.CLINICIAN:
        actions.update(("accept", "recontest"))
    if state is ContestState.ESCALATED and role is Role.REVIEWER:
        actions.add("resolve")
    return frozenset(actions)
