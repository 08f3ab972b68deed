"""LLM bridge: clients, prompts, Comment validation and interventions."""

from .clients import (ChatClient, ChatReply, FixtureDirNotEmpty, LiveClient, MissingAPIKey, RecordingClient,
                      ReplayClient, ReplayExhausted, ScriptedClient, TransportError, UsageMeter, estimate_tokens)
from .comment import (CONFIDENCE_LEVELS, Comment, ErrorKind, Hypothesis, MalformedCommentError, ValidationError,
                      parse_comment, validate_comment)
from .intervene import (UNAVAILABLE, Fallback, InterventionContext, InterventionResult, LLMConfig,
                        generate_report, intervene, overview, self_consistent_comment, self_consistent_text)
from .scripted import GuidedResponder

__all__ = [
    "CONFIDENCE_LEVELS", "ChatClient", "ChatReply", "Comment", "ErrorKind", "Fallback", "FixtureDirNotEmpty",
    "GuidedResponder", "Hypothesis", "InterventionContext", "InterventionResult", "LLMConfig", "LiveClient",
    "MalformedCommentError", "MissingAPIKey", "RecordingClient", "ReplayClient", "ReplayExhausted",
    "ScriptedClient", "TransportError", "UNAVAILABLE", "UsageMeter", "ValidationError", "estimate_tokens",
    "generate_report", "intervene", "overview", "parse_comment", "self_consistent_comment",
    "self_consistent_text", "validate_comment",
]
