"""
Tests for the REST API
"""
import pytest
from fastapi.testclient import TestClient

from app.main import app

TOY_POINTS = "t=-0.5,x=1;t=-0.2,x=2"


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


def test_root_and_health(client):
    assert client.get("/").json()["status"] == "running"
    health = client.get("/health").json()
    assert health["status"] == "healthy"
    assert health["models"] >= 6


def test_catalog(client):
    models = client.get("/api/catalog").json()["models"]
    assert {"name": "toy", "description": "u_t = u u_x^2, the worked example branch"} in models


def test_catalog_entry(client):
    response = client.get("/api/catalog/hopf")
    assert response.status_code == 200
    assert response.json()["constants"] == {"a": 1.0}


def test_unknown_model_is_400(client):
    response = client.get("/api/catalog/burgers")
    assert response.status_code == 400
    assert response.json()["type"] == "UnknownModel"


def test_verify(client):
    body = client.post("/api/verify", json={"solution": "x/sqrt(-2*t)", "points": TOY_POINTS}).json()
    assert body["passed"] and body["exit_status"] == 0


def test_verify_failure_is_a_report(client):
    response = client.post("/api/verify", json={"solution": "x", "points": TOY_POINTS})
    assert response.status_code == 200
    assert response.json()["exit_status"] == 1


def test_missing_field_is_400(client):
    response = client.post("/api/verify", json={"points": TOY_POINTS})
    assert response.status_code == 400
    assert "solution" in response.json()["detail"]


def test_parse_error_is_400(client):
    response = client.post("/api/symmetry", json={"sigma": "u_x +", "points": TOY_POINTS})
    assert response.status_code == 400
    assert response.json()["type"] == "ParseError"


def test_transform_rows(client):
    body = client.post("/api/transform", json={
        "seed": "x/sqrt(-2*t)", "g": "eta^2", "grid": "t:-0.2:-0.05:3,x:2:3:3",
        "expect": "sqrt(-2 - x^2/(2*t))"}).json()
    assert body["passed"]
    assert len(body["rows"]) == 9
    assert set(body["rows"][0]) == {"t", "x", "u", "tprime", "xprime", "delta", "residual", "reason"}


def test_degenerate_seed_is_422(client):
    response = client.post("/api/transform", json={
        "seed": "sqrt(2*(x+t))", "g": "eta^2", "grid": "t:0.1:0.2:3,x:1:2:3"})
    assert response.status_code == 422
    assert response.json()["type"] == "DegenerateSeed"


def test_out_of_domain_is_422(client):
    response = client.post("/api/verify", json={"solution": "x/sqrt(-2*t)", "points": "t=0.5,x=1"})
    assert response.status_code == 422
    assert response.json()["type"] == "SamplesOutOfDomain"


def test_invariant_and_hierarchy(client):
    assert client.post("/api/invariant", json={"phi": "x - u/u_x", "points": TOY_POINTS}).json()["passed"]
    body = client.post("/api/hierarchy", json={"levels": 1, "points": TOY_POINTS}).json()
    assert body["data"]["levels"][1] == "u_x"


def test_hereditary(client):
    body = client.post("/api/hereditary", json={"trials": 10, "rng_seed": 3}).json()
    assert body["arguments"]["rng_seed"] == 3
    assert body["passed"]


def test_register_user_model(client):
    model = {
        "name": "api-hopf", "n": 1, "form": "separated", "F": "a*u", "constants": {"a": 3.0},
        "seeds": [{"expr": "x/(1-a*t)", "points": [{"t": 0.1, "x": 2.0}]}],
    }
    response = client.post("/api/models", json=model)
    assert response.status_code == 200
    assert response.json()["status"] == "registered"
    body = client.post("/api/verify", json={"model": "api-hopf", "solution": "x/(1-3*t)",
                                            "points": "t=0.1,x=2"}).json()
    assert body["passed"]


def test_invalid_user_model_is_400(client):
    response = client.post("/api/models", json={"name": "broken", "n": 1, "form": "separated", "F": "u",
                                                 "seeds": [{"expr": "x", "points": [{"t": 0.0, "x": 1.0}]}]})
    assert response.status_code == 400
    assert response.json()["type"] == "ModelValidationError"
