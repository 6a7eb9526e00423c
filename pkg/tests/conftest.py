"""Shared test helpers."""

from ladder.errors import MockMiss
from ladder.gateway import GenerationExchange, GenerationParams


class SequenceBackend:
    """Returns scripted responses in call order; records every request."""

    backend_id = "seq"

    def __init__(self, responses=()):
        self.responses = list(responses)
        self.requests = []
        self.call_count = 0

    def push(self, *responses):
        self.responses.extend(responses)

    def complete(self, request, params=GenerationParams()):
        self.requests.append(request)
        if not self.responses:
            raise MockMiss("scripted backend ran dry", key=request.canonical_key)
        self.call_count += 1
        return GenerationExchange(
            request, params, self.responses.pop(0), self.backend_id, 0.0)


def counter_clock(start=0.0):
    state = {"t": start}

    def tick():
        state["t"] += 1.0
        return state["t"]

    return tick
