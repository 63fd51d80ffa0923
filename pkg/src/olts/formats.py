"""Text formats for models and policies.

Model files are JSON documents; probabilities and rewards are written as
decimal strings so they survive a round trip exactly (plain JSON numbers are
accepted on input too). See ``docs/formats.md`` for the grammar.
"""
from __future__ import annotations

import json
import zipfile
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Sequence

import numpy as np

from .mdp import NonStationaryPolicy, TabularMDP, validate

FORMAT_TAG = "olts-mdp/1"


class FormatError(ValueError):
    """Malformed or invalid model/policy file."""


def _num(x, where: str) -> float:
    if isinstance(x, bool):
        raise FormatError(f"{where}: expected a number, got {x!r}")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float(Decimal(x.strip()))
        except InvalidOperation:
            pass
    raise FormatError(f"{where}: expected a decimal string, got {x!r}")


def _dec(x: float) -> str:
    return repr(float(x))


def mdp_to_dict(mdp: TabularMDP) -> dict:
    S, A = mdp.num_states, mdp.num_actions
    rewards = []
    for s in range(S):
        for a in range(A):
            keep = mdp.reward_probs[s, a] > 0
            pairs = [[_dec(v), _dec(p)] for v, p in
                     zip(mdp.reward_support[s, a][keep], mdp.reward_probs[s, a][keep])]
            rewards.append(pairs or [["0.0", "1.0"]])
    initial = mdp.initial if mdp.has_fixed_initial else [_dec(p) for p in mdp.initial]
    return {"format": FORMAT_TAG, "num_states": S, "num_actions": A, "horizon": mdp.horizon,
            "initial": initial,
            "transitions": [[_dec(p) for p in mdp.transitions[s, a]] for s in range(S) for a in range(A)],
            "rewards": rewards}


def mdp_from_dict(doc: dict) -> TabularMDP:
    try:
        S, A, H = int(doc["num_states"]), int(doc["num_actions"]), int(doc["horizon"])
        rows, rewards, initial = doc["transitions"], doc["rewards"], doc["initial"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"missing or malformed header field: {exc}") from exc
    if S < 1 or A < 1 or H < 1:
        raise FormatError("num_states, num_actions and horizon must be positive")
    if len(rows) != S * A or len(rewards) != S * A:
        raise FormatError(f"expected {S * A} transition rows and reward lists")
    P = np.zeros((S, A, S))
    for i, row in enumerate(rows):
        if len(row) != S:
            raise FormatError(f"transition row {i} has {len(row)} entries, expected {S}")
        P[i // A, i % A] = [_num(x, f"transitions[{i}]") for x in row]
    K = max(len(r) for r in rewards)
    if K == 0:
        raise FormatError("reward lists must be non-empty")
    sup = np.zeros((S, A, K))
    prob = np.zeros((S, A, K))
    for i, pairs in enumerate(rewards):
        if not pairs:
            raise FormatError(f"reward list {i} is empty")
        for j, pair in enumerate(pairs):
            if len(pair) != 2:
                raise FormatError(f"rewards[{i}][{j}] must be a [value, probability] pair")
            sup[i // A, i % A, j] = _num(pair[0], f"rewards[{i}][{j}]")
            prob[i // A, i % A, j] = _num(pair[1], f"rewards[{i}][{j}]")
    if isinstance(initial, list):
        if len(initial) != S:
            raise FormatError("initial distribution must have num_states entries")
        init = np.array([_num(x, "initial") for x in initial])
    else:
        init = int(initial)
    mdp = TabularMDP(P, sup, prob, H, init)
    problems = validate(mdp)
    if problems:
        raise FormatError("invalid model: " + "; ".join(problems))
    return mdp


def load_mdp(path) -> TabularMDP:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON document: {exc}") from exc
    return mdp_from_dict(doc)


def save_mdp(mdp: TabularMDP, path) -> None:
    Path(path).write_text(json.dumps(mdp_to_dict(mdp), indent=1) + "\n", encoding="utf-8")


def format_policy(policy: NonStationaryPolicy) -> str:
    return "".join(" ".join(str(int(a)) for a in row) + "\n" for row in policy.table)


def parse_policy(text: str, horizon: int | None = None, num_states: int | None = None) -> NonStationaryPolicy:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise FormatError("policy file is empty")
    width = len(lines[0])
    if any(len(ln) != width for ln in lines):
        raise FormatError("every policy line must list one action per state")
    try:
        table = np.array([[int(x) for x in ln] for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"non-integer action: {exc}") from exc
    if horizon is not None and table.shape[0] != horizon:
        raise FormatError(f"policy has {table.shape[0]} lines, expected {horizon}")
    if num_states is not None and table.shape[1] != num_states:
        raise FormatError(f"policy lines have {table.shape[1]} entries, expected {num_states}")
    if table.min() < 0:
        raise FormatError("actions must be non-negative")
    return NonStationaryPolicy(table)


def load_policy(path, horizon: int | None = None, num_states: int | None = None) -> NonStationaryPolicy:
    return parse_policy(Path(path).read_text(encoding="utf-8"), horizon, num_states)


def save_policy(policy: NonStationaryPolicy, path) -> None:
    Path(path).write_text(format_policy(policy), encoding="utf-8")


def save_policy_archive(policies: Sequence[NonStationaryPolicy], path) -> None:
    """Zip archive with one policy file per member, ``policy_00000.txt`` onwards."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for i, p in enumerate(policies):
            info = zipfile.ZipInfo(f"policy_{i:05d}.txt", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, format_policy(p))


def load_policy_archive(path) -> list[NonStationaryPolicy]:
    with zipfile.ZipFile(path) as zf:
        return [parse_policy(zf.read(name).decode("utf-8")) for name in sorted(zf.namelist())]


def load_policies(path, horizon: int | None = None, num_states: int | None = None) -> list[NonStationaryPolicy]:
    """Policies from a zip archive or from a text file with blank-line separated blocks."""
    path = Path(path)
    if zipfile.is_zipfile(path):
        return load_policy_archive(path)
    blocks = [b for b in path.read_text(encoding="utf-8").split("\n\n") if b.strip()]
    return [parse_policy(b, horizon, num_states) for b in blocks]
