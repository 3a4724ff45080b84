import pytest

from taxqa.surface import (
    MentionNotFoundError,
    indefinite_article,
    mentions_concept,
    pluralize,
    replace_concept_mention,
)


@pytest.mark.parametrize(
    "noun,plural",
    [
        ("dog", "dogs"),
        ("boat", "boats"),
        ("dish", "dishes"),
        ("box", "boxes"),
        ("bench", "benches"),
        ("glass", "glasses"),
        ("city", "cities"),
        ("boy", "boys"),
        ("knife", "knives"),
        ("leaf", "leaves"),
        ("roof", "roofs"),
        ("potato", "potatoes"),
        ("photo", "photos"),
        ("man", "men"),
        ("child", "children"),
        ("person", "people"),
        ("sheep", "sheep"),
        ("furniture", "furniture"),
        ("baked goods", "baked goods"),
        ("traffic light", "traffic lights"),
        ("pants", "pants"),
    ],
)
def test_pluralize(noun, plural):
    assert pluralize(noun) == plural


def test_pluralize_rejects_empty():
    with pytest.raises(ValueError):
        pluralize("")


@pytest.mark.parametrize(
    "phrase,article",
    [
        ("dog", "a"),
        ("apple", "an"),
        ("orange cat", "an"),
        ("hour", "an"),
        ("honest person", "an"),
        ("unicorn", "a"),
        ("university", "a"),
        ("utensil", "a"),
        ("european car", "a"),
        ("one", "a"),
    ],
)
def test_indefinite_article(phrase, article):
    assert indefinite_article(phrase) == article


class TestReplaceMention:
    def test_plural(self):
        assert (
            replace_concept_mention("Are there any dogs?", "dog", "mammal")
            == "Are there any mammals?"
        )

    def test_singular_article_reagreement(self):
        assert (
            replace_concept_mention("Is there a dog that is brown?", "dog", "animal")
            == "Is there an animal that is brown?"
        )
        assert (
            replace_concept_mention("Is there an apple on the table?", "apple", "banana")
            == "Is there a banana on the table?"
        )

    def test_same_singular_plural_form(self):
        # "sheep" must not be treated as plural when marked by an article
        assert (
            replace_concept_mention("Do you see a sheep that is white?", "sheep", "truck")
            == "Do you see a truck that is white?"
        )
        assert (
            replace_concept_mention("Are there any sheep?", "sheep", "truck")
            == "Are there any trucks?"
        )

    def test_word_boundaries(self):
        # "cat" inside "catalog" must not match
        assert (
            replace_concept_mention("Is the catalog near a cat?", "cat", "dog")
            == "Is the catalog near a dog?"
        )

    def test_multiword_concept(self):
        assert (
            replace_concept_mention("Are there any traffic lights?", "traffic light", "device")
            == "Are there any devices?"
        )

    def test_replaces_named_concept_not_first_article(self):
        text = "Is it true that a cat is a feline?"
        assert (
            replace_concept_mention(text, "feline", "vehicle")
            == "Is it true that a cat is a vehicle?"
        )

    def test_missing_mention_raises(self):
        with pytest.raises(MentionNotFoundError):
            replace_concept_mention("Are there any dogs?", "cat", "dog")


def test_mentions_concept_respects_boundaries():
    assert mentions_concept("There is a brown dog.", "dog")
    assert mentions_concept("Are there any dogs?", "dog")
    assert not mentions_concept("The catalog is open.", "cat")
    assert not mentions_concept("There is a brown dog.", "canine")
