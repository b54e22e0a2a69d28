import numpy as np
import pytest

from imgset.layout import (
    build_set_mask,
    build_token_layout,
    format_mask_dump,
    mask_entry_allowed,
)

GOLDEN_DUMP = """\
n=2 N_p=3 N_g=1 N=4
p1=[0,1) p2=[1,3) g=[3,4) v1=[4,6) v2=[6,8)
0--00000
0--00000
-0000000
-0000000
"""


def test_key_axis_order():
    layout = build_token_layout([2, 3], 2, [4, 4])
    assert layout.prompt_spans == ((0, 2), (2, 5))
    assert layout.global_span == (5, 7)
    assert layout.visual_spans == ((7, 11), (11, 15))
    assert layout.width == 15


def test_length_validation():
    with pytest.raises(ValueError):
        build_token_layout([2, 0], 1, [4, 4])
    with pytest.raises(ValueError):
        build_token_layout([2, 2], 0, [4, 4])
    with pytest.raises(ValueError):
        build_token_layout([2], 1, [4, 4])
    with pytest.raises(ValueError):
        build_token_layout([], 1, [])


def test_mask_values_are_ieee_infinite():
    layout = build_token_layout([1, 1], 1, [2, 2])
    mask = build_set_mask(layout)
    finite = mask[np.isfinite(mask)]
    assert np.all(finite == 0.0)
    assert np.all(np.isneginf(mask[~np.isfinite(mask)]))


def test_mask_matches_per_entry_predicate():
    layout = build_token_layout([2, 1, 3], 2, [4, 2, 4])
    mask = build_set_mask(layout)
    for i in range(layout.n_visual):
        for j in range(layout.width):
            expected = 0.0 if mask_entry_allowed(layout, i, j) else -np.inf
            assert mask[i, j] == expected or (
                np.isneginf(mask[i, j]) and np.isneginf(expected)
            )


def test_row_unmasked_count():
    layout = build_token_layout([2, 3], 1, [4, 5])
    mask = build_set_mask(layout)
    for i in range(layout.n_visual):
        k = layout.image_of_query(i)
        p_len = layout.prompt_spans[k][1] - layout.prompt_spans[k][0]
        assert np.isfinite(mask[i]).sum() == p_len + layout.n_global + layout.n_visual


def test_image_of_query_bounds():
    layout = build_token_layout([1], 1, [3])
    with pytest.raises(IndexError):
        layout.image_of_query(3)


def test_mask_dump_golden():
    layout = build_token_layout([1, 2], 1, [2, 2])
    assert format_mask_dump(layout, build_set_mask(layout)) == GOLDEN_DUMP
