"""
Tests for the shipped ETF taxonomy and SIC major groups.
"""

import pytest

from sparse_mfm.domain.errors import PanelSchemaError
from sparse_mfm.domain.taxonomy import FF5_IDS, MARKET_ID, EtfTaxonomy, default_sic_groups, default_taxonomy


class TestEtfTaxonomy:
    """Tests for the category -> class lookup."""

    def test_shipped_taxonomy_shape(self):
        """73 categories spread over 10 classes."""
        taxonomy = default_taxonomy()
        assert len(taxonomy.categories) == 73
        assert len(taxonomy.classes) == 10
        assert all(taxonomy.categories_of(c) for c in taxonomy.classes)

    def test_class_of(self):
        """Categories resolve to their class."""
        taxonomy = default_taxonomy()
        assert taxonomy.class_of("Corporate Bonds") == "Bond/Fixed Income"
        assert taxonomy.class_of("Currency") == "Currency"
        assert "Precious Metals" in taxonomy.categories_of("Commodity")

    def test_unknown_category(self):
        """Unknown categories are schema errors."""
        with pytest.raises(PanelSchemaError):
            default_taxonomy().class_of("Tulip Bulbs")

    def test_undeclared_class(self):
        """Categories must point at declared classes."""
        with pytest.raises(PanelSchemaError):
            EtfTaxonomy(classes=["Equity"], category_class={"Metals": "Commodity"})


class TestSicGroups:
    """Tests for the 2-digit SIC lookup."""

    def test_leading_zero_is_kept(self):
        """Group ids are strings such as '01'."""
        groups = default_sic_groups()
        assert groups.division_of("01") == "A"
        assert groups.group_title("01") == "Agricultural Production Crops"

    def test_titles_with_commas(self):
        """Quoted titles survive parsing."""
        assert default_sic_groups().group_title("09") == "Fishing, hunting, and trapping"

    def test_unknown_group(self):
        """Unknown ids give None."""
        assert default_sic_groups().group_title("00") is None


class TestFf5Ids:
    """Tests for the reserved factor identifiers."""

    def test_market_is_first(self):
        """The market factor leads the FF5 ids."""
        assert FF5_IDS[0] == MARKET_ID
        assert len(FF5_IDS) == 5
