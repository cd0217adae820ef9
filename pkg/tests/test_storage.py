import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aiprov.errors import IntegrityMismatch, NotFound, StoreUnavailable
from aiprov.primitives import sha256
from aiprov.storage import ObjectStore, StorageUrl


def test_put_is_content_addressed(store):
    url = store.put(b"ciphertext")
    assert str(url) == "store://" + sha256(b"ciphertext").hex()
    assert len(str(url)) == 72
    assert store.put(b"ciphertext") == url
    assert store.get(url) == b"ciphertext"
    assert store.get(str(url)) == b"ciphertext"


@settings(max_examples=25, deadline=None)
@given(st.binary(max_size=512))
def test_put_get_roundtrip(tmp_path_factory, data):
    store = ObjectStore(tmp_path_factory.mktemp("s"))
    assert store.get(store.put(data)) == data


def test_missing_and_corrupted_objects(store):
    with pytest.raises(NotFound):
        store.get("store://" + "0" * 64)
    url = store.put(b"abc")
    store.path_for(url.locator).write_bytes(b"abd")
    with pytest.raises(IntegrityMismatch):
        store.get(url)


def test_file_urls(tmp_path, store):
    f = tmp_path / "blob"
    f.write_bytes(b"elsewhere")
    assert store.get(f"file://{f}") == b"elsewhere"
    with pytest.raises(NotFound):
        store.get(f"file://{tmp_path}/missing")


@pytest.mark.parametrize("text", ["store://XYZ", "ftp://host/x", "file://relative/path", "plain"])
def test_bad_urls(text):
    with pytest.raises(ValueError):
        StorageUrl.parse(text)


def test_unwritable_root(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(StoreUnavailable):
        ObjectStore(blocker / "sub").put(b"x")
