import json

import pytest
from hypothesis import given, strategies as st

from botverse.domain import (
    Archetype,
    DanglingReference,
    DomainError,
    ExternalPost,
    Interaction,
    InteractionKind,
    MalformedJson,
    MissingField,
    OutOfRange,
    Persona,
    Post,
    canonical_json,
    narrative_of,
    validate_persona,
)

FULL_PROFILE = {
    "handle": "Alex89",
    "age": 35,
    "gender": "male",
    "location": "Canada",
    "political_orientation": "liberal",
    "religious_orientation": "agnostic",
    "education": "University Degree",
    "behavioral_traits": {"posting_style": "cautious and skeptical"},
}


class TestPersonaValidation:
    def test_full_profile_round_trips(self):
        persona = validate_persona(FULL_PROFILE)
        assert persona.handle == "Alex89"
        assert persona.age == 35
        assert persona.gender == "male"
        assert persona.location == "Canada"
        assert persona.political_orientation == "liberal"
        assert persona.religious_orientation == "agnostic"
        assert persona.education == "University Degree"
        assert persona.trait("posting_style") == "cautious and skeptical"
        assert persona.archetype is Archetype.BENIGN
        assert validate_persona(persona.to_dict()) == persona

    def test_accepts_json_string(self):
        persona = validate_persona(json.dumps(FULL_PROFILE))
        assert persona.handle == "Alex89"

    def test_missing_handle(self):
        raw = dict(FULL_PROFILE)
        del raw["handle"]
        with pytest.raises(MissingField):
            validate_persona(raw)

    def test_missing_age(self):
        raw = dict(FULL_PROFILE)
        del raw["age"]
        with pytest.raises(MissingField):
            validate_persona(raw)

    @pytest.mark.parametrize("age", [12, 121, -1, "35", 35.0, True])
    def test_age_out_of_range_or_wrong_type(self, age):
        raw = dict(FULL_PROFILE, age=age)
        with pytest.raises(OutOfRange):
            validate_persona(raw)

    @pytest.mark.parametrize("age", [13, 120])
    def test_age_boundaries_accepted(self, age):
        assert validate_persona(dict(FULL_PROFILE, age=age)).age == age

    def test_malformed_json_string(self):
        with pytest.raises(MalformedJson):
            validate_persona("{not json")

    def test_non_object(self):
        with pytest.raises(MalformedJson):
            validate_persona([1, 2, 3])

    def test_unknown_archetype(self):
        with pytest.raises(OutOfRange):
            validate_persona(dict(FULL_PROFILE, archetype="neutral"))

    def test_unknown_keys_preserved_sorted(self):
        raw = dict(FULL_PROFILE, zodiac="leo", favorite_team="rovers")
        persona = validate_persona(raw)
        assert persona.extra == (("favorite_team", "rovers"), ("zodiac", "leo"))
        # validate -> serialize -> validate is idempotent
        assert validate_persona(persona.to_dict()) == persona

    @given(
        handle=st.text(min_size=1, max_size=20),
        age=st.integers(min_value=13, max_value=120),
        traits=st.dictionaries(
            st.text(min_size=1, max_size=8), st.text(max_size=16), max_size=4
        ),
    )
    def test_round_trip_property(self, handle, age, traits):
        persona = validate_persona(
            {"handle": handle, "age": age, "behavioral_traits": traits}
        )
        assert validate_persona(persona.to_dict()) == persona


class TestPost:
    def test_reply_and_repost_mutually_exclusive(self):
        with pytest.raises(DomainError):
            Post(post_id="p2", author="a", text="x", created_at=0, in_reply_to="p1", repost_of="p1")

    def test_negative_created_at(self):
        with pytest.raises(DomainError):
            Post(post_id="p1", author="a", text="x", created_at=-1)

    def test_round_trip(self):
        post = Post(
            post_id="p1",
            author="a00001",
            text="hello",
            created_at=1234,
            narrative_id="N1",
            in_reply_to="p0",
        )
        assert Post.from_dict(post.to_dict()) == post
        assert Post.from_dict(json.loads(canonical_json(post.to_dict()))) == post


class TestInteraction:
    def test_like_carries_no_post(self):
        with pytest.raises(DomainError):
            Interaction(kind=InteractionKind.LIKE, actor="a", target="p1", at=0, produced_post="p2")

    @pytest.mark.parametrize("kind", [InteractionKind.REPLY, InteractionKind.REPOST])
    def test_reply_repost_require_post(self, kind):
        with pytest.raises(DomainError):
            Interaction(kind=kind, actor="a", target="p1", at=0)

    def test_round_trip(self):
        inter = Interaction(
            kind=InteractionKind.REPOST, actor="a", target="p1", at=99, produced_post="p2"
        )
        assert Interaction.from_dict(inter.to_dict()) == inter


class TestExternalPost:
    def test_round_trip(self):
        post = ExternalPost(source_id="did:x/abc", text="t", observed_at=5, topics=("a", "b"))
        assert ExternalPost.from_dict(post.to_dict()) == post


class TestNarrativeOf:
    def _lookup(self, posts):
        by_id = {p.post_id: p for p in posts}
        return by_id.get

    def test_own_tag_wins(self):
        p = Post(post_id="p1", author="a", text="x", created_at=0, narrative_id="N1")
        assert narrative_of(p, self._lookup([p])) == "N1"

    def test_untagged_root_is_none(self):
        p = Post(post_id="p1", author="a", text="x", created_at=0)
        assert narrative_of(p, self._lookup([p])) is None

    def test_three_node_chain_inherits_root_tag(self):
        # root(N1) <- untagged reply <- untagged repost: both resolve to N1
        root = Post(post_id="p1", author="a", text="x", created_at=0, narrative_id="N1")
        reply = Post(post_id="p2", author="b", text="y", created_at=1, in_reply_to="p1")
        repost = Post(post_id="p3", author="c", text="z", created_at=2, repost_of="p2")
        lookup = self._lookup([root, reply, repost])
        assert narrative_of(reply, lookup) == "N1"
        assert narrative_of(repost, lookup) == "N1"

    def test_nearest_ancestor_tag_wins(self):
        root = Post(post_id="p1", author="a", text="x", created_at=0, narrative_id="N1")
        mid = Post(post_id="p2", author="b", text="y", created_at=1, in_reply_to="p1", narrative_id="N2")
        leaf = Post(post_id="p3", author="c", text="z", created_at=2, repost_of="p2")
        assert narrative_of(leaf, self._lookup([root, mid, leaf])) == "N2"

    def test_dangling_reference(self):
        orphan = Post(post_id="p2", author="b", text="y", created_at=1, in_reply_to="p1")
        with pytest.raises(DanglingReference):
            narrative_of(orphan, self._lookup([orphan]))


def test_canonical_json_is_sorted_and_compact():
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
