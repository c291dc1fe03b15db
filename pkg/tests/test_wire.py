import pytest
from hypothesis import given
from hypothesis import strategies as st

from enumstack.errors import WireError
from enumstack.wire import Frame, decode_frame, encode_frame


def test_roundtrip_basic():
    frame = Frame(
        kind="LOOKUP", src="resolver", dst="R1", req_id=7,
        fields={"number": "13154434473"},
    )
    assert decode_frame(encode_frame(frame)) == frame


def test_length_prefix_shape():
    data = encode_frame(Frame(kind="GET", src="a", dst="b", req_id=1))
    head, _, body = data.partition(b":")
    assert int(head) == len(body)


def test_escaping_special_characters():
    fields = {"records": 'x;y=z%q\nnext\rline', "note": "==;;%%"}
    frame = Frame(kind="PROVISION", src="a", dst="b", req_id=2, fields=fields)
    assert decode_frame(encode_frame(frame)).fields == fields


def test_reply_swaps_endpoints():
    frame = Frame(kind="GET", src="client", dst="reg1", req_id=3)
    reply = frame.ok_reply(records="")
    assert (reply.src, reply.dst, reply.req_id, reply.is_response) == (
        "reg1", "client", 3, True,
    )
    assert reply.ok


def test_reserved_field_names_rejected():
    with pytest.raises(WireError):
        Frame(kind="GET", src="a", dst="b", req_id=1, fields={"kind": "x"})


def test_bad_length_prefix():
    with pytest.raises(WireError):
        decode_frame(b"notanumber:kind=GET")
    with pytest.raises(WireError):
        decode_frame(b"999:kind=GET;src=a;dst=b;req=1;resp=0")
    with pytest.raises(WireError):
        decode_frame(b"no prefix at all")


def test_missing_header_field():
    with pytest.raises(WireError):
        decode_frame(b"14:kind=GET;src=a")


text_values = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=40
)


@given(
    kind=st.sampled_from(["LOOKUP", "GET", "PROVISION", "PEER_UPDATE"]),
    src=st.text(alphabet="abcdefg:0123456789", min_size=1, max_size=10),
    dst=st.text(alphabet="abcdefg:0123456789", min_size=1, max_size=10),
    req_id=st.integers(min_value=0, max_value=10**9),
    is_response=st.booleans(),
    fields=st.dictionaries(
        st.text(alphabet="abcdefghij_", min_size=1, max_size=8), text_values, max_size=5
    ),
)
def test_roundtrip_property(kind, src, dst, req_id, is_response, fields):
    frame = Frame(
        kind=kind, src=src, dst=dst, req_id=req_id,
        is_response=is_response, fields=fields,
    )
    assert decode_frame(encode_frame(frame)) == frame
