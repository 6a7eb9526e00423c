#!/usr/bin/env python3
"""Regenerate the regression-scenario fixtures from scripted responses.

Runs the committed op script once against an in-order scripted backend while
recording every (template, slots, response) exchange, then writes the fixture
file the mock backend replays from. Run from the repo root:

    python3 scripts/make_fig2_fixtures.py
    ladder replay fixtures/fig2/script.json fixtures/fig2/responses \
        --out fixtures/fig2/golden
"""

import json
import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ladder.errors import MockMiss  # noqa: E402
from ladder.gateway import (  # noqa: E402
    GenerationExchange,
    GenerationParams,
    RecordingBackend,
)
from ladder.session import Session, run_script  # noqa: E402

MARKER = "# <<children>>"


def fence(block_id, code):
    return f"```block:{block_id}\n{code}\n```"


PREAMBLE_CODE = """\
from sklearn.datasets import load_wine
from sklearn.linear_model import LinearRegression, Ridge
from sklearn.model_selection import train_test_split
from sklearn.metrics import mean_squared_error
import matplotlib.pyplot as plt

losses = []"""

DATA_CODE = """\
data = load_wine(as_frame=True)
X = data.data
y = data.target"""

PARTITION_CODE = ("X_train, X_test, y_train, y_test = "
                  "train_test_split(X, y, test_size=0.2, random_state=0)")

MODEL_CODE = f"""\
{MARKER}
model = LinearRegression()
model.fit(X_train, y_train)"""

MODEL_CODE_RIDGE = f"""\
{MARKER}
model = Ridge(alpha=0.5)
model.fit(X_train, y_train)"""

STEP1_CODE = """\
model.fit(X_train, y_train)
y_pred_train = model.predict(X_train)
y_pred_test = model.predict(X_test)
losses.append(mean_squared_error(y_train, y_pred_train))"""

LIST_STEPS_RESPONSE = (
    "```step\nFit the model on the training data\n---\n"
    "model.fit(X_train, y_train)\n```\n"
    "```step\nPredict on Train and Test data\n---\n"
    "y_pred_train = model.predict(X_train)\n"
    "y_pred_test = model.predict(X_test)\n```\n"
    "```step\nRecord the training loss\n---\n"
    "losses.append(mean_squared_error(y_train, y_pred_train))\n```\n"
    f"```residual\n{MARKER}\n```"
)

RECOMMEND_RESPONSE = (
    "0.9 | Build and fit the regression model\n"
    "0.7 | Scale the features before training\n"
    "0.2 | Save the split to disk"
)

PLOT_CODE = """\
plt.figure()
plt.plot(losses)
plt.savefig("loss_curve.png")"""

PLOT_CODE_PER_EPOCH = """\
plt.figure()
plt.plot(losses)
plt.title(f"Loss after epoch {epoch}")
plt.savefig(f"loss_epoch_{epoch}.png")"""

# Responses in backend-call order for the committed script. The loop block is
# pure code syntax and never reaches the backend.
RESPONSES = [
    fence("b1", PREAMBLE_CODE),                       # generate preamble
    fence("b2", DATA_CODE),                           # generate data
    fence("b4", PARTITION_CODE) + "\n" + fence("b3", MODEL_CODE),  # model+child
    "ssion Model",                                    # autocomplete
    fence("b6", STEP1_CODE),                          # generate step1
    LIST_STEPS_RESPONSE,                              # list_steps step1
    RECOMMEND_RESPONSE,                               # recommend partition
    fence("b10", PLOT_CODE),                          # generate plot
    fence("b3", MODEL_CODE_RIDGE),                    # supplement_merge model
    "unchanged",                                      # propagate partition
    "unchanged",                                      # propagate loop (move)
    fence("b10", PLOT_CODE_PER_EPOCH),                # propagate plot (move)
]


class InOrderBackend:
    backend_id = "scripted"

    def __init__(self, responses):
        self.responses = list(responses)
        self.call_count = 0

    def complete(self, request, params=GenerationParams()):
        if not self.responses:
            raise MockMiss("scripted responses exhausted",
                           key=request.canonical_key)
        self.call_count += 1
        return GenerationExchange(request, params, self.responses.pop(0),
                                  self.backend_id, 0.0)


def counter_clock():
    state = {"t": 0.0}

    def tick():
        state["t"] += 1.0
        return state["t"]

    return tick


def main():
    script = json.loads((REPO / "fixtures/fig2/script.json").read_text())
    recorder = RecordingBackend(InOrderBackend(RESPONSES))
    session = Session(script["session_id"], recorder, clock=counter_clock())
    run_script(session, script)
    if recorder.inner.responses:
        raise SystemExit(f"unused scripted responses: {len(recorder.inner.responses)}")
    out = REPO / "fixtures/fig2/responses"
    out.mkdir(parents=True, exist_ok=True)
    recorder.save(out / "responses.json")
    print(f"recorded {len(recorder.records)} fixtures")
    print(session.doc.text)


if __name__ == "__main__":
    main()
