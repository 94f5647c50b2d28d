import json

import requests


def test_contract_shape(running_server, ngram_model):
    resp = requests.post(
        f"{running_server}/logprobs",
        json={"text": "A dog runs along the pier.", "context": None},
        timeout=10,
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["model_id"] == ngram_model.model_id
    assert len(body["tokens"]) == len(body["logprobs"]) > 0
    assert all(lp <= 0 for lp in body["logprobs"])


def test_context_changes_first_token_logprob(running_server):
    plain = requests.post(
        f"{running_server}/logprobs",
        json={"text": "The harbor town wakes slowly.", "context": None},
        timeout=10,
    ).json()
    ctxed = requests.post(
        f"{running_server}/logprobs",
        json={"text": "The harbor town wakes slowly.",
              "context": "Stars appear over the bay at night."},
        timeout=10,
    ).json()
    assert plain["logprobs"][0] != ctxed["logprobs"][0]


def test_empty_text_is_400(running_server):
    resp = requests.post(f"{running_server}/logprobs",
                         json={"text": "", "context": None}, timeout=10)
    assert resp.status_code == 400
    assert "text" in resp.json()["error"]


def test_malformed_body_is_400(running_server):
    resp = requests.post(
        f"{running_server}/logprobs",
        data="this is not json",
        headers={"Content-Type": "application/json"},
        timeout=10,
    )
    assert resp.status_code == 400


def test_unknown_path_is_404(running_server):
    resp = requests.post(f"{running_server}/other", json={"text": "x"}, timeout=10)
    assert resp.status_code == 404


def test_bad_context_type_is_400(running_server):
    resp = requests.post(f"{running_server}/logprobs",
                         json={"text": "A dog.", "context": 42}, timeout=10)
    assert resp.status_code == 400


def test_responses_match_direct_scoring(running_server, ngram_model):
    text = "Traders shout prices while buyers weigh the morning catch."
    body = requests.post(f"{running_server}/logprobs",
                         json={"text": text, "context": None}, timeout=10).json()
    tokens, logprobs = ngram_model.score(text)
    assert body["tokens"] == tokens
    assert body["logprobs"] == logprobs
