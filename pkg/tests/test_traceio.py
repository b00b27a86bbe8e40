import json
import struct

import pytest

from protoseg.model import IngestionError, UsageError
from protoseg.traceio import (TraceSpec, load_ground_truth, load_segmentation,
                              load_trace, save_ground_truth, save_hexlines,
                              save_segmentation, sniff_format)


def build_pcap(frames, order="<", nanos=False, linktype=1):
    """Independent classic-pcap writer used as the parse oracle."""
    magic = 0xA1B23C4D if nanos else 0xA1B2C3D4
    blob = struct.pack(order + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)
    for i, frame in enumerate(frames):
        blob += struct.pack(order + "IIII", 1000 + i, 0, len(frame), len(frame))
        blob += frame
    return blob


def eth_ipv4_udp(payload, sport=1234, dport=5678):
    udp = struct.pack(">HHHH", sport, dport, 8 + len(payload), 0) + payload
    total = 20 + len(udp)
    ip = struct.pack(">BBHHHBBH4s4s", 0x45, 0, total, 1, 0, 64, 17, 0,
                     bytes([10, 0, 0, 1]), bytes([10, 0, 0, 2])) + udp
    return b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00" + ip


def eth_ipv4_tcp(payload, sport=1234, dport=80):
    tcp = struct.pack(">HHIIBBHHH", sport, dport, 1, 1, 5 << 4, 0x18, 1024, 0, 0) + payload
    total = 20 + len(tcp)
    ip = struct.pack(">BBHHHBBH4s4s", 0x45, 0, total, 2, 0, 64, 6, 0,
                     bytes([10, 0, 0, 1]), bytes([10, 0, 0, 2])) + tcp
    return b"\xaa" * 6 + b"\xbb" * 6 + b"\x08\x00" + ip


ARP_FRAME = b"\xff" * 6 + b"\xaa" * 6 + b"\x08\x06" + b"\x00" * 28


class TestPcap:
    @pytest.mark.parametrize("order", ["<", ">"])
    @pytest.mark.parametrize("nanos", [False, True])
    def test_udp_payloads_roundtrip(self, tmp_path, order, nanos):
        payloads = [b"\x00\x08", b"\x00\x09\x10"]
        frames = [eth_ipv4_udp(p) for p in payloads]
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap(frames, order=order, nanos=nanos))
        msgs = load_trace(TraceSpec(str(path), format="pcap", layer="udp_payload"))
        assert [m.payload for m in msgs] == payloads
        assert msgs[0].source.endswith("frame 1")

    def test_tcp_payloads(self, tmp_path):
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap([eth_ipv4_tcp(b"GET /")]))
        msgs = load_trace(TraceSpec(str(path), format="pcap", layer="tcp_payload"))
        assert [m.payload for m in msgs] == [b"GET /"]

    def test_port_filter(self, tmp_path):
        frames = [eth_ipv4_udp(b"\x01", dport=53), eth_ipv4_udp(b"\x02", dport=99)]
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap(frames))
        msgs = load_trace(TraceSpec(str(path), format="pcap", layer="udp_payload", port=53))
        assert [m.payload for m in msgs] == [b"\x01"]

    def test_arp_only_capture_yields_nothing(self, tmp_path):
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap([ARP_FRAME]))
        assert load_trace(TraceSpec(str(path), format="pcap")) == []

    def test_unknown_magic_rejected(self, tmp_path):
        path = tmp_path / "t.pcap"
        path.write_bytes(b"\x0a\x0d\x0d\x0a" + bytes(20))
        with pytest.raises(IngestionError, match="magic"):
            load_trace(TraceSpec(str(path), format="pcap"))

    def test_truncated_record_names_frame(self, tmp_path):
        blob = build_pcap([eth_ipv4_udp(b"\x01")])
        path = tmp_path / "t.pcap"
        path.write_bytes(blob[:-3])
        with pytest.raises(IngestionError, match="frame 1"):
            load_trace(TraceSpec(str(path), format="pcap"))

    def test_non_ethernet_link_rejected(self, tmp_path):
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap([], linktype=101))
        with pytest.raises(IngestionError, match="link type"):
            load_trace(TraceSpec(str(path), format="pcap"))

    def test_raw_frame_layer(self, tmp_path):
        path = tmp_path / "t.pcap"
        path.write_bytes(build_pcap([ARP_FRAME]))
        msgs = load_trace(TraceSpec(str(path), format="pcap", layer="raw_frame"))
        assert msgs[0].payload == ARP_FRAME

    def test_missing_file(self):
        with pytest.raises(IngestionError):
            load_trace(TraceSpec("/nonexistent.pcap", format="pcap"))


class TestHexlines:
    def test_dedupe(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("0008\n0009\n0008\n")
        msgs = load_trace(TraceSpec(str(path)))
        assert [m.payload for m in msgs] == [b"\x00\x08", b"\x00\x09"]
        assert [m.id for m in msgs] == [0, 1]

    def test_dedupe_off_keeps_duplicates(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("0008\n0008\n")
        msgs = load_trace(TraceSpec(str(path), dedupe=False))
        assert len(msgs) == 2

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("# header\n\n00 08  # spaced bytes\n")
        msgs = load_trace(TraceSpec(str(path)))
        assert [m.payload for m in msgs] == [b"\x00\x08"]

    def test_odd_length_rejected_with_line(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("0008\n009\n")
        with pytest.raises(IngestionError, match=":2"):
            load_trace(TraceSpec(str(path)))

    def test_max_messages(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("01\n02\n03\n")
        msgs = load_trace(TraceSpec(str(path), max_messages=2))
        assert len(msgs) == 2

    def test_spec_validation(self):
        with pytest.raises(UsageError):
            TraceSpec("x", layer="raw_frame", port=53)
        with pytest.raises(UsageError):
            TraceSpec("x", max_messages=0)

    def test_sniff(self):
        assert sniff_format("a.pcap") == "pcap"
        assert sniff_format("a.hex") == "hexlines"


class TestGroundTruthJson:
    def _trace(self, tmp_path):
        path = tmp_path / "t.hex"
        path.write_text("001122334455\n")
        return load_trace(TraceSpec(str(path)))

    def test_plain_cut_map(self, tmp_path):
        msgs = self._trace(tmp_path)
        path = tmp_path / "gt.json"
        path.write_text('{"0": [2, 4]}')
        truth = load_ground_truth(str(path), msgs)
        assert truth.cuts == {0: (2, 4)}

    def test_out_of_range_cut_names_message(self, tmp_path):
        msgs = self._trace(tmp_path)
        path = tmp_path / "gt.json"
        path.write_text('{"0": [9]}')
        with pytest.raises(IngestionError, match="message 0"):
            load_ground_truth(str(path), msgs)

    def test_empty_object(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text("{}")
        truth = load_ground_truth(str(path))
        assert truth.cuts == {}

    def test_field_record_form(self, tmp_path):
        msgs = self._trace(tmp_path)
        path = tmp_path / "gt.json"
        path.write_text(json.dumps({"0": [
            {"start": 0, "end": 2, "type": "number"},
            {"start": 2, "end": 6, "type": "char"},
        ]}))
        truth = load_ground_truth(str(path), msgs)
        assert truth.cuts == {0: (2,)}
        assert truth.labels == {0: ("number", "char")}

    def test_bad_key_reports_json_path(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text('{"zero": [1]}')
        with pytest.raises(IngestionError, match=r"\$\.zero"):
            load_ground_truth(str(path))

    def test_bad_element_reports_json_path(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text('{"0": [1, "x"]}')
        with pytest.raises(IngestionError, match=r"\$\.0\[1\]"):
            load_ground_truth(str(path))

    def test_unknown_type_label_rejected(self, tmp_path):
        path = tmp_path / "gt.json"
        path.write_text(json.dumps({"0": [{"start": 0, "end": 2, "type": "widget"}]}))
        with pytest.raises(IngestionError, match="widget"):
            load_ground_truth(str(path))


class TestSegmentationJson:
    def test_save_load_roundtrip_is_byte_identical(self, tmp_path):
        from protoseg.model import Segmentation
        segs = [Segmentation(0, (2, 4)), Segmentation(10, ()), Segmentation(2, (1,))]
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_segmentation(str(p1), segs)
        loaded = load_segmentation(str(p1))
        save_segmentation(str(p2), loaded)
        assert p1.read_bytes() == p2.read_bytes()
        assert [s.message_id for s in loaded] == [0, 2, 10]

    def test_records_rejected_in_segmentations(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text('{"0": [{"start": 0, "end": 2}]}')
        with pytest.raises(IngestionError, match="ground truth"):
            load_segmentation(str(path))

    def test_ground_truth_save_load(self, tmp_path):
        from protoseg.model import GroundTruth
        truth = GroundTruth(cuts={3: (1, 2), 0: (5,)})
        path = tmp_path / "gt.json"
        save_ground_truth(str(path), truth)
        again = load_ground_truth(str(path))
        assert again.cuts == truth.cuts

    def test_hexlines_roundtrip(self, tmp_path):
        from protoseg.model import Message
        msgs = [Message(0, b"\x00\x08"), Message(1, b"\xff")]
        path = tmp_path / "t.hex"
        save_hexlines(str(path), msgs)
        again = load_trace(TraceSpec(str(path)))
        assert [m.payload for m in again] == [m.payload for m in msgs]
