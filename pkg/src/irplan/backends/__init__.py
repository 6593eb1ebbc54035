from irplan.backends.base import (
    ALERT_MAX_TOKENS,
    DEFAULT_MAX_TOKENS,
    DEFAULT_TEMPERATURE,
    ROLE_CALIBRATE,
    ROLE_JUDGE,
    ROLE_PROPOSE,
    ROLE_ROLLOUT,
    ROLE_SCREEN,
    ROLE_SIMULATE,
    Backend,
    CountingBackend,
    GenerationRequest,
    fingerprint,
    generate,
    parse_action_object,
)
from irplan.backends.http import Cassette, ChatCompletionsBackend
from irplan.backends.scripted import RecordingBackend, ScriptedBackend
from irplan.backends.tabular import Outcome, TabularBackend, noop_backend, oracle_backend

__all__ = [
    "ALERT_MAX_TOKENS", "DEFAULT_MAX_TOKENS", "DEFAULT_TEMPERATURE",
    "ROLE_CALIBRATE", "ROLE_JUDGE", "ROLE_PROPOSE", "ROLE_ROLLOUT", "ROLE_SCREEN", "ROLE_SIMULATE",
    "Backend", "Cassette", "ChatCompletionsBackend", "CountingBackend", "GenerationRequest",
    "Outcome", "RecordingBackend", "ScriptedBackend", "TabularBackend",
    "fingerprint", "generate", "noop_backend", "oracle_backend", "parse_action_object",
]
