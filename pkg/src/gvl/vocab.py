"""Token-id layout shared by the corpus generator, the caption decoder and the metrics.

The vocabulary is a flat integer space:

    0                  begin-of-sequence (decoder input only)
    1                  end-of-sequence
    2                  subject token (every caption starts with it)
    3 .. 3+A-1         verb tokens, one per event archetype
    3+A .. 3+A+M-1     ordinal tokens, one per event position in a video
    3+A+M ..           filler tokens

where A is the archetype count and M the maximum events per video.
"""

BOS_TOKEN = 0
EOS_TOKEN = 1
SUBJECT_TOKEN = 2
VERB_TOKEN_BASE = 3


def verb_token(archetype_id: int) -> int:
    return VERB_TOKEN_BASE + archetype_id


def ordinal_token_base(num_archetypes: int) -> int:
    return VERB_TOKEN_BASE + num_archetypes


def ordinal_token(num_archetypes: int, position: int) -> int:
    return ordinal_token_base(num_archetypes) + position


def filler_token_base(num_archetypes: int, max_events: int) -> int:
    return ordinal_token_base(num_archetypes) + max_events


def archetype_of_verb(token_id: int) -> int:
    """Inverse of verb_token; callers must know the token is in the verb range."""
    return token_id - VERB_TOKEN_BASE
