"""End-to-end check of the `glass` extension module from Python."""

import hashlib
import json

import glass

B58 = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz"


def b58encode(data: bytes) -> str:
    n = int.from_bytes(data, "big")
    out = ""
    while n:
        n, r = divmod(n, 58)
        out = B58[r] + out
    return "1" * (len(data) - len(data.lstrip(b"\0"))) + out


def expected_cid(block: bytes) -> str:
    return b58encode(bytes([0x12, 0x20]) + hashlib.sha256(block).digest())


def check_primitives():
    for block in [b"", b"hello", bytes(range(256)) * 40]:
        assert glass.cid_of(block) == expected_cid(block)
        assert glass.sha256_digest(block) == hashlib.sha256(block).digest()
    assert glass.canonical_json('{ "b": 1, "a": [true, null, "x"] }') == '{"a":[true,null,"x"],"b":1}'

    data = bytes((i * 31 + 7) % 251 for i in range(40))
    root, blocks = glass.build_dag(data, 16)
    assert len(root) == 46 and root.startswith("Qm")
    assert all(glass.cid_of(b) == c for c, b in blocks.items())
    assert glass.reassemble(root, blocks) == data
    leaf = next(c for c, b in blocks.items() if c != root)
    blocks[leaf] = blocks[leaf][:-1] + bytes([blocks[leaf][-1] ^ 1])
    try:
        glass.reassemble(root, blocks)
    except glass.GlassError:
        pass
    else:
        raise AssertionError("corrupted block accepted")


def check_bundled():
    heights = {"diploma": 15, "untrusted_issuer": 4, "org2_key_read": 10}
    for name in glass.bundled_scenarios():
        d = glass.Deployment(0)
        report = d.run_scenario(name)
        assert report["passed"], report
        assert report["final_height"] == heights[name] == d.height
        assert len(d.audit()) == d.height
        assert d.verify_chain()


def check_manual_flow():
    d = glass.Deployment(11)
    uni, alice, acme = (glass.Wallet.derive(11, n) for n in ("uni", "alice", "acme"))
    d.onboard(uni, "org2.org", "legal_person")
    d.onboard(alice)
    d.onboard(acme, "org2.org", "legal_person")
    schema = {
        "schema_id": "glass:schema:academic-credential:1",
        "credential_type": "AC",
        "required_attributes": [
            {"name": "name", "kind": "text"},
            {"name": "degree", "kind": "text"},
            {"name": "award_date", "kind": "date"},
        ],
        "optional_attributes": [],
    }
    d.register_schema(json.dumps(schema))
    claims = json.dumps({"name": "Maria Silva", "degree": "MSc", "award_date": "2021-07-15"})
    try:
        d.issue(uni, alice.did, schema["schema_id"], claims)
    except glass.GlassError as e:
        assert e.args[0] == "issuer-untrusted"
    else:
        raise AssertionError("untrusted issuer accepted")
    d.trust_issuer(uni.did, "PT", ["AC"])
    d.trust_app(acme.did)
    record = d.issue(uni, alice.did, schema["schema_id"], claims)
    assert record["uri"] == "ipfs://" + record["cid"]

    try:
        d.retrieve(alice, record["cid"], "org2.org")
    except glass.GlassError as e:
        assert e.args[0] == "access-denied"
    else:
        raise AssertionError("org2 read the wrapped key")

    vc = d.retrieve(alice, record["cid"])
    assert json.loads(vc)["claims"]["name"] == "Maria Silva"
    assert alice.holdings()[0]["cid"] == record["cid"]
    report = d.present_and_verify(alice, acme, [vc])
    assert report["overall"], report

    restored = glass.Wallet.from_keystore(alice.to_keystore())
    assert restored.did == alice.did
    dump = d.registry_dump()
    assert acme.did in dump["apps"]
    assert d.verify_chain()


if __name__ == "__main__":
    check_primitives()
    check_bundled()
    check_manual_flow()
    print("python smoke test: ok")
