import warnings

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artcontext.errors import ConfigurationError, ContractViolation, GatewayError, PreconditionError, RetryableGatewayError
from artcontext.gateway import (
    BackendDescriptor,
    CachedGateway,
    FixtureEntry,
    GenerationParams,
    MockBackend,
    MockProfile,
    PromptTruncationWarning,
    RemoteBackend,
    make_gateway,
    strip_artist_flavors,
)
from artcontext.gateway.mock import formal_statistics
from artcontext.gateway.server import wire_handler
from artcontext.imaging import digest_hex


def img(seed, value=None):
    if value is not None:
        return np.full((512, 512, 3), value, np.uint8)
    return np.random.default_rng(seed).integers(0, 256, (512, 512, 3), dtype=np.uint8)


@pytest.fixture()
def profile():
    a, b = img(1), img(2)
    return MockProfile(
        checkpoint_id="ckpt-test",
        entries={
            digest_hex(a): FixtureEntry(1903.0, 1910.0, "a portrait of a woman, oil on canvas, by jan vermeer"),
            digest_hex(b): FixtureEntry(1655.0, 1670.0, "a still life, lute"),
        },
        century_tags={"wig": 1700, "carriage": 1700, "telephone": 1900},
        artist_flavors=["jan vermeer"],
    )


@pytest.fixture()
def backend(profile):
    return MockBackend(profile)


# ---------------------------------------------------------------- mock


def test_formal_shape_determinism_and_digest_keying(backend):
    a = backend.encode_formal(img(1))
    assert a.shape == (16384,) and a.dtype == np.float32 and np.all(np.isfinite(a))
    assert np.array_equal(a, backend.encode_formal(img(1)))
    assert not np.array_equal(a, backend.encode_formal(img(2)))


def test_formal_stats_coordinates(backend):
    x = img(5)
    assert np.allclose(backend.encode_formal(x)[:4], formal_statistics(x), rtol=1e-6)


def test_decode_round_trip_channel_means(backend):
    x = img(9)
    out = backend.decode_formal(backend.encode_formal(x))
    assert np.all(np.abs(out.reshape(-1, 3).mean(0) - x.reshape(-1, 3).mean(0)) <= 1.0)


def test_decode_zero_latent_and_bad_length(backend):
    assert np.all(backend.decode_formal(np.zeros(16384, np.float32)) == 0)
    with pytest.raises(ContractViolation):
        backend.decode_formal(np.zeros(16383, np.float32))


def test_context_signal_injection(backend):
    c = backend.encode_context(img(1))
    assert c.shape == (1024,) and c[0] == np.float32(1903.0) and c[1] == np.float32(1910.0)
    assert np.array_equal(c, backend.encode_context(img(1)))


def test_unknown_image_sits_at_attractor(backend):
    c = backend.encode_context(img(77))
    assert c[0] == 1950.0 and c[1] == 1950.0


def test_checkpoint_changes_outputs(profile):
    other = MockProfile(**{**profile.__dict__, "checkpoint_id": "other"})
    a = MockBackend(profile).encode_context(img(1))
    b = MockBackend(other).encode_context(img(1))
    assert a[0] == b[0] and not np.array_equal(a[2:], b[2:])


@pytest.mark.parametrize("prompt, n", [("", 0), ("wig carriage", 2), ("wig, carriage", 3), ("a,b,,c", 6)])
def test_count_tokens(backend, prompt, n):
    assert backend.count_tokens(prompt) == n


def test_zero_steps_identity(backend):
    x = img(1)
    out = backend.generate(x, GenerationParams("wig", diffusion_steps=0))
    assert out.tobytes() == x.tobytes()


@pytest.mark.parametrize("steps", [1, 10, 25, 50])
def test_empty_prompt_drifts_to_attractor(backend, steps):
    out = backend.generate(img(1), GenerationParams("", diffusion_steps=steps, seed=3))
    c = backend.encode_context(out)
    frac = steps / 50
    assert c[0] == pytest.approx(1903 + frac * (1950 - 1903), abs=1e-3)
    assert c[1] == pytest.approx(1910 + frac * (1950 - 1910), abs=1e-3)


@pytest.mark.parametrize("steps", [5, 50])
def test_tagged_prompt_drifts_to_century(backend, steps):
    out = backend.generate(img(2), GenerationParams("wig carriage telephone", diffusion_steps=steps))
    c = backend.encode_context(out)
    assert c[0] == pytest.approx(1655 + steps / 50 * (1700 - 1655), abs=1e-3)


def test_generation_preserves_formal_stats_and_prompt(backend):
    x = img(2)
    out = backend.generate(x, GenerationParams("wig", diffusion_steps=30, seed=11))
    assert not np.array_equal(out, x)
    assert np.array_equal(backend.encode_formal(out)[:4], backend.encode_formal(x)[:4])
    assert backend.interrogate(out) == backend.interrogate(x)


def test_generation_depends_on_seed(backend):
    x = img(2)
    a = backend.generate(x, GenerationParams("", diffusion_steps=30, seed=1))
    b = backend.generate(x, GenerationParams("", diffusion_steps=30, seed=2))
    assert not np.array_equal(a, b)
    assert np.array_equal(a, backend.generate(x, GenerationParams("", diffusion_steps=30, seed=1)))


def test_over_budget_prompt_warns(backend):
    with pytest.warns(PromptTruncationWarning):
        backend.generate(img(1), GenerationParams(" ".join(["wig"] * 78), diffusion_steps=1))


def test_century_vote_ignores_tokens_past_budget(backend):
    prompt = " ".join(["x"] * 76 + ["wig"] + ["telephone"] * 5)
    assert backend.prompt_century(prompt) == 1700


def test_interrogate_fixture_and_flavor_filter(backend):
    assert backend.interrogate(img(1)) == "a portrait of a woman, oil on canvas"
    assert backend.interrogate(img(2)) == "a still life, lute"
    with pytest.raises(ConfigurationError):
        backend.interrogate(img(3))


@pytest.mark.parametrize(
    "prompt, flavors, out",
    [("a man, by jan vermeer, oil", ["Jan Vermeer"], "a man, oil"),
     ("a man, jan vermeer", ["jan vermeer"], "a man"),
     ("a man, jan vermeer inspired", ["jan vermeer"], "a man, jan vermeer inspired"),
     ("a man", [], "a man")],
)
def test_strip_artist_flavors(prompt, flavors, out):
    assert strip_artist_flavors(prompt, flavors) == out


@pytest.mark.parametrize("kw", [{"diffusion_steps": 51}, {"diffusion_steps": -1}, {"ddim_steps": 0}, {"seed": -1}])
def test_generation_params_validation(kw):
    with pytest.raises(PreconditionError):
        GenerationParams(**kw)


def test_profile_round_trip(tmp_path, profile):
    back = MockProfile.load(profile.save(tmp_path / "p.json"))
    assert back.to_dict() == profile.to_dict()
    with pytest.raises(ConfigurationError):
        MockProfile.load(tmp_path / "absent.json")


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 50))
def test_generated_images_never_collide_with_source(seed, steps):
    x = np.zeros((512, 512, 3), np.uint8)
    be = MockBackend(MockProfile())
    out = be.generate(x, GenerationParams("", diffusion_steps=steps, seed=seed))
    assert out.tobytes() != x.tobytes()


# ---------------------------------------------------------------- remote


def remote_for(inner, handler=None, **kw):
    transport = httpx.MockTransport(handler or wire_handler(inner))
    client = httpx.Client(transport=transport)
    return RemoteBackend("http://inference.test", inner.checkpoint_id, client=client, backoff=0.0, **kw)


def test_remote_matches_mock_over_the_wire(backend):
    remote = remote_for(backend, artist_flavors=["jan vermeer"])
    x = img(1)
    assert np.array_equal(remote.encode_formal(x), backend.encode_formal(x))
    assert np.array_equal(remote.encode_context(x), backend.encode_context(x))
    assert remote.count_tokens("wig, carriage") == 3
    assert remote.interrogate(x) == "a portrait of a woman, oil on canvas"
    lat = backend.encode_formal(x)
    assert np.array_equal(remote.decode_formal(lat), backend.decode_formal(lat))
    out = remote.generate(x, GenerationParams("wig", diffusion_steps=20, seed=4))
    assert np.array_equal(out, backend.generate(x, GenerationParams("wig", diffusion_steps=20, seed=4)))
    assert remote.generate(x, GenerationParams("wig", diffusion_steps=0)).tobytes() == x.tobytes()


def test_remote_post_filters_artist_flavors():
    def handler(request):
        return httpx.Response(200, json={"prompt": "a river, by Claude Monet, impressionism", "checkpoint_id": "c"})

    remote = RemoteBackend("http://x", "c", client=httpx.Client(transport=httpx.MockTransport(handler)),
                           artist_flavors=["claude monet"])
    assert remote.interrogate(img(0, 5)) == "a river, impressionism"


def test_remote_retries_then_succeeds(backend):
    calls = {"n": 0}
    inner = wire_handler(backend)

    def flaky(request):
        calls["n"] += 1
        if calls["n"] < 3:
            raise httpx.ConnectError("boom", request=request)
        return inner(request)

    remote = remote_for(backend, flaky)
    assert remote.count_tokens("wig") == 1 and calls["n"] == 3


def test_remote_exhausted_retries_are_retryable(backend):
    remote = remote_for(backend, lambda r: httpx.Response(503), attempts=2)
    with pytest.raises(RetryableGatewayError):
        remote.count_tokens("wig")


def test_remote_client_error_not_retried(backend):
    calls = []

    def bad(request):
        calls.append(1)
        return httpx.Response(400, text="no")

    with pytest.raises(GatewayError):
        remote_for(backend, bad).count_tokens("wig")
    assert len(calls) == 1


def test_remote_checkpoint_mismatch(backend):
    remote = RemoteBackend("http://x", "expected", client=httpx.Client(transport=httpx.MockTransport(wire_handler(backend))))
    with pytest.raises(ContractViolation):
        remote.count_tokens("wig")


def test_remote_rejects_wrong_latent_length(backend):
    def short(request):
        return httpx.Response(200, json={"latent": [0.0] * 10, "checkpoint_id": backend.checkpoint_id})

    with pytest.raises(ContractViolation):
        remote_for(backend, short).encode_context(img(1))


# ---------------------------------------------------------------- cache


def test_cache_hits_and_equality(backend, tmp_path):
    cached = CachedGateway(backend, tmp_path / "cache")
    x = img(1)
    first = cached.encode_context(x)
    second = cached.encode_context(x)
    assert np.array_equal(first, second) and cached.hits == 1 and cached.misses == 1
    second[0] = -1  # callers cannot corrupt the cache
    assert cached.encode_context(x)[0] == np.float32(1903.0)
    fresh = CachedGateway(backend, tmp_path / "cache")
    assert np.array_equal(fresh.encode_context(x), first) and fresh.hits == 1
    assert fresh.interrogate(x) == cached.interrogate(x)


def test_cache_generate_in_memory(backend, tmp_path):
    cached = CachedGateway(backend, tmp_path / "cache")
    p = GenerationParams("", diffusion_steps=5, seed=2)
    a = cached.generate(img(1), p)
    b = cached.generate(img(1), p)
    assert np.array_equal(a, b) and cached.hits == 1
    assert not any(p.suffix == ".png" for p in (tmp_path / "cache").rglob("*"))


def test_cache_concurrent_readers(backend):
    from concurrent.futures import ThreadPoolExecutor

    cached = CachedGateway(backend)
    images = [img(i % 4) for i in range(16)]
    with ThreadPoolExecutor(4) as ex:
        outs = list(ex.map(cached.encode_formal, images))
    for x, o in zip(images, outs):
        assert np.array_equal(o, backend.encode_formal(x))


def test_make_gateway(tmp_path, profile):
    path = profile.save(tmp_path / "p.json")
    gw = make_gateway(BackendDescriptor("mock", mock_profile=str(path)))
    assert isinstance(gw, CachedGateway) and gw.checkpoint_id == "ckpt-test"
    assert isinstance(make_gateway(BackendDescriptor("mock", mock_profile=str(path)), cache=False), MockBackend)
    with pytest.raises(ValueError):
        BackendDescriptor("remote")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert isinstance(make_gateway(BackendDescriptor("remote", endpoint="http://x"), cache=False), RemoteBackend)
