import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chatloom.convparse import (
    Conversation,
    ImageRefSegment,
    ParseResult,
    RosterEntry,
    TextSegment,
    conversation_from_dict,
    conversation_to_dict,
    extract_image_tags,
    parse_transcript,
    render_transcript,
    segment_message,
)
from chatloom.convparse import make_roster as roster_from_images
from helpers import make_images, make_roster, simple_conversation


def _expected_roster(captions) -> dict[int, RosterEntry]:
    return make_roster(captions)


# -- golden dialogues -----------------------------------------------------------


def test_golden_dialogues_parse_to_expected_structure(golden_dialogues):
    for text, expected in golden_dialogues:
        roster = _expected_roster(expected["roster"])
        result = parse_transcript(text, roster, conversation_id="golden")
        assert result.ok, result.defects
        assert result.defects == []
        conversation = result.conversation
        assert len(conversation.turns) == expected["turns"]
        refs = [
            {"turn": turn, "side": side, "index": seg.index, "description": seg.description}
            for turn, side, seg in conversation.image_refs()
        ]
        assert refs == expected["image_refs"]


def test_golden_dialogue_descriptions_match_roster_exactly(golden_dialogues):
    for text, expected in golden_dialogues:
        roster = _expected_roster(expected["roster"])
        result = parse_transcript(text, roster)
        for _turn, _side, seg in result.conversation.image_refs():
            assert seg.description == roster[seg.index].caption


# -- tag extraction ---------------------------------------------------------------


def test_extract_single_tag():
    extraction = extract_image_tags("see <img0> a red bicycle </img0> here")
    assert len(extraction.tags) == 1
    tag = extraction.tags[0]
    assert tag.index == 0
    assert tag.description == "a red bicycle"
    assert extraction.defects == []


def test_extract_two_tags_in_order():
    extraction = extract_image_tags("<img1> one </img1> and <img0> zero </img0>")
    assert [t.index for t in extraction.tags] == [1, 0]


def test_extract_unclosed_tag():
    extraction = extract_image_tags("look <img2> never closed")
    assert extraction.tags == []
    assert [d.kind for d in extraction.defects] == ["unclosed_tag"]


def test_extract_stray_close():
    extraction = extract_image_tags("oops </img3> text")
    assert [d.kind for d in extraction.defects] == ["unmatched_close_tag"]


def test_extract_mismatched_close_index():
    extraction = extract_image_tags("<img0> cat </img1>")
    assert extraction.tags == []
    assert [d.kind for d in extraction.defects] == ["mismatched_close_index"]


def test_extract_double_open():
    extraction = extract_image_tags("<img0> first <img1> second </img1>")
    kinds = [d.kind for d in extraction.defects]
    assert kinds == ["unclosed_tag"]
    assert [t.index for t in extraction.tags] == [1]


def test_extract_keeps_description_verbatim_minus_framing():
    extraction = extract_image_tags("<img0>  spaced  out  </img0>")
    # only the single framing space on each side is removed
    assert extraction.tags[0].description == " spaced  out "


# -- message segmentation ------------------------------------------------------------


def test_segments_tile_the_message():
    text = "intro <img0> a cat </img0> middle <img1> a dog </img1> outro"
    segments, defects = segment_message(text)
    assert defects == []
    assert segments[0].span[0] == 0
    assert segments[-1].span[1] == len(text)
    for left, right in zip(segments, segments[1:]):
        assert left.span[1] == right.span[0]
    assert [type(s) for s in segments] == [
        TextSegment,
        ImageRefSegment,
        TextSegment,
        ImageRefSegment,
        TextSegment,
    ]


def test_whitespace_between_tags_is_absorbed():
    text = "<img0> a </img0>   <img1> b </img1>"
    segments, _ = segment_message(text)
    assert [type(s) for s in segments] == [ImageRefSegment, ImageRefSegment]
    assert segments[0].span == (0, text.index("<img1>"))
    assert segments[1].span == (text.index("<img1>"), len(text))


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=120))
def test_segments_always_tile(text):
    segments, _ = segment_message(text)
    if not text.strip():
        assert segments == []
        return
    assert segments[0].span[0] == 0
    assert segments[-1].span[1] == len(text)
    for left, right in zip(segments, segments[1:]):
        assert left.span[1] == right.span[0]
    rebuilt = "".join(
        text[s.span[0] : s.span[1]] for s in segments
    )
    assert rebuilt == text


# -- transcript structure --------------------------------------------------------------


def _roster2():
    return _expected_roster(["a red bicycle", "an old harbor"])


def test_parse_minimal_dialogue():
    text = "Human: hello\nAssistant: hi there"
    result = parse_transcript(text, _roster2())
    assert result.ok
    assert len(result.conversation.turns) == 1


def test_parse_multiline_messages():
    text = "Human: first line\nstill the same message\nAssistant: reply"
    result = parse_transcript(text, _roster2())
    assert result.ok
    instruction = result.conversation.turns[0].instruction
    assert "still the same message" in instruction[0].content


def test_parse_rejects_assistant_first():
    result = parse_transcript("Assistant: hi\nHuman: hello", _roster2())
    assert not result.ok
    assert "first_speaker_not_human" in [d.kind for d in result.defects]


def test_parse_rejects_consecutive_speakers():
    text = "Human: a\nHuman: b\nAssistant: c"
    result = parse_transcript(text, _roster2())
    assert "non_alternating_speakers" in [d.kind for d in result.defects]


def test_parse_rejects_unanswered_final_instruction():
    text = "Human: a\nAssistant: b\nHuman: trailing question"
    result = parse_transcript(text, _roster2())
    assert "unanswered_final_instruction" in [d.kind for d in result.defects]


def test_parse_rejects_empty_input():
    result = parse_transcript("", _roster2())
    assert not result.ok
    assert [d.kind for d in result.defects] == ["no_messages"]


def test_parse_flags_preamble_text():
    text = "Sure, here is a dialogue:\nHuman: a\nAssistant: b"
    result = parse_transcript(text, _roster2())
    assert "text_outside_turns" in [d.kind for d in result.defects]
    assert not result.ok


def test_parse_flags_empty_message():
    text = "Human: \nAssistant: fine"
    result = parse_transcript(text, _roster2())
    assert "empty_message" in [d.kind for d in result.defects]


def test_tag_defects_do_not_block_conversation():
    text = "Human: look </img9>\nAssistant: done"
    result = parse_transcript(text, _roster2())
    assert result.ok
    assert [d.kind for d in result.defects] == ["unmatched_close_tag"]


def test_parse_validates_roster_shape():
    roster = {1: RosterEntry(image_id="x", caption="c")}
    with pytest.raises(ValueError, match="0..n-1"):
        parse_transcript("Human: a\nAssistant: b", roster)


def test_make_roster_indexes_in_order():
    images = make_images(3)
    roster = roster_from_images(images)
    assert sorted(roster) == [0, 1, 2]
    assert roster[1].caption == images[1].caption


# -- rendering round trip ------------------------------------------------------------


def test_render_parse_round_trip():
    conversation = simple_conversation("c1")
    text = render_transcript(conversation)
    result = parse_transcript(text, conversation.roster, conversation_id="c1")
    assert result.ok and result.defects == []
    original = [(t, s, seg.index, seg.description) for t, s, seg in conversation.image_refs()]
    reparsed = [
        (t, s, seg.index, seg.description) for t, s, seg in result.conversation.image_refs()
    ]
    assert reparsed == original
    assert render_transcript(result.conversation) == text


def test_dict_round_trip():
    conversation = simple_conversation("c2")
    clone = conversation_from_dict(conversation_to_dict(conversation))
    assert conversation_to_dict(clone) == conversation_to_dict(conversation)


# -- totality -----------------------------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=200))
def test_parse_never_raises(text):
    result = parse_transcript(text, _roster2())
    assert isinstance(result, ParseResult)
    assert result.ok or result.defects
