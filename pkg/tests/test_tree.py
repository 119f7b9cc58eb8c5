import numpy as np
import pytest

from phylotrait.errors import DataError, NewickError
from phylotrait.simulate import random_tree
from phylotrait.tree import build_psi, drop_tip, parse_newick, traversal

FIG1 = "((A:1,B:1):2,C:3);"


class TestParseNewick:
    def test_three_tip_tree(self):
        tree = parse_newick(FIG1)
        assert tree.n_tips == 3
        assert tree.n_nodes == 5
        assert tree.tip_labels == ("A", "B", "C")
        # branches above A, B, C and the (A,B) ancestor: t1=1, t2=1, t5=3, t4=2
        np.testing.assert_allclose(tree.branch_length[:4], [1, 1, 3, 2])

    def test_two_tip_tree(self):
        tree = parse_newick("(A:1,B:2);")
        assert tree.n_tips == 2
        assert tree.root == 2
        assert set(tree.children[2]) == {0, 1}

    def test_polytomy_rejected(self):
        with pytest.raises(NewickError, match="polytomy"):
            parse_newick("((A:1,B:1,C:1):2,D:3);")

    def test_missing_semicolon(self):
        with pytest.raises(NewickError, match=";"):
            parse_newick("(A:1,B:2)")

    def test_unbalanced_parens(self):
        with pytest.raises(NewickError):
            parse_newick("((A:1,B:2);")

    def test_missing_branch_length(self):
        with pytest.raises(NewickError, match="branch length"):
            parse_newick("(A:1,B);")

    def test_duplicate_tip_label(self):
        with pytest.raises(NewickError, match="duplicate"):
            parse_newick("(A:1,A:2);")

    def test_single_tip_rejected(self):
        with pytest.raises(NewickError):
            parse_newick("A:1;")

    def test_root_branch_length_ignored(self):
        tree = parse_newick("(A:1,B:2):7.5;")
        assert tree.n_tips == 2
        assert tree.branch_length[tree.root] == 0.0

    def test_internal_labels_preserved_but_ignored(self):
        tree = parse_newick("((A:1,B:1)ab:2,C:3)root;")
        assert tree.internal_labels
        assert "ab" in tree.internal_labels.values()

    def test_whitespace_tolerated(self):
        tree = parse_newick(" ( (A:1, B:1) :2 , C:3 ) ;\n")
        assert tree.tip_labels == ("A", "B", "C")


class TestTraversal:
    def test_fig1_postorder(self):
        tree = parse_newick(FIG1)
        # 1-based (v1, v2, v4, v3, v5) == 0-based (0, 1, 3, 2, 4)
        np.testing.assert_array_equal(traversal(tree, "post"), [0, 1, 3, 2, 4])

    def test_fig1_preorder_is_reverse(self):
        tree = parse_newick(FIG1)
        np.testing.assert_array_equal(traversal(tree, "pre"), [4, 2, 3, 1, 0])

    def test_two_tip_postorder(self):
        tree = parse_newick("(A:1,B:2);")
        np.testing.assert_array_equal(traversal(tree, "post"), [0, 1, 2])

    def test_parent_after_child(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            tree = random_tree(int(rng.integers(2, 40)), rng)
            post = traversal(tree, "post")
            pos = np.empty(tree.n_nodes, dtype=int)
            pos[post] = np.arange(tree.n_nodes)
            for k in range(tree.n_nodes - 1):
                assert pos[tree.parent[k]] > pos[k]


class TestSerialize:
    def test_round_trip_fixed(self):
        tree = parse_newick(FIG1)
        again = parse_newick(tree.to_newick())
        assert again.to_newick() == tree.to_newick()
        assert again.tip_labels == tree.tip_labels
        np.testing.assert_allclose(again.branch_length, tree.branch_length)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            tree = random_tree(int(rng.integers(2, 60)), rng)
            text = tree.to_newick()
            again = parse_newick(text)
            assert again.to_newick() == text


class TestBuildPsi:
    def test_fig1_entries(self):
        tree = parse_newick(FIG1)
        cov = build_psi(tree, kappa=1.0)
        assert cov.psi[0, 1] == pytest.approx(2.0)  # = t4
        assert cov.psi[0, 0] == pytest.approx(3.0)  # = t1 + t4
        assert cov.psi[0, 2] == pytest.approx(0.0)

    def test_no_shared_path(self):
        tree = parse_newick("(A:1,B:2);")
        np.testing.assert_allclose(build_psi(tree, 1.0).psi, np.diag([1.0, 2.0]))

    def test_psi_tilde_adds_j_over_kappa(self):
        tree = parse_newick("(A:1,B:2);")
        np.testing.assert_allclose(build_psi(tree, 1.0).psi_tilde, [[2, 1], [1, 3]])

    def test_random_trees_spd(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            tree = random_tree(int(rng.integers(2, 65)), rng)
            kappa = float(rng.uniform(0.2, 5.0))
            cov = build_psi(tree, kappa)
            np.testing.assert_allclose(cov.psi, cov.psi.T)
            assert np.linalg.eigvalsh(cov.psi_tilde).min() > 0

    def test_kappa_validation(self):
        with pytest.raises(DataError):
            build_psi(parse_newick(FIG1), 0.0)


class TestDropTip:
    def test_drop_merges_branch(self):
        tree = parse_newick(FIG1)
        smaller = drop_tip(tree, "B")
        assert smaller.n_tips == 2
        assert set(smaller.tip_labels) == {"A", "C"}
        # A's pendant branch absorbs the suppressed internal edge: 1 + 2
        a = smaller.tip_labels.index("A")
        assert smaller.branch_length[a] == pytest.approx(3.0)

    def test_drop_child_of_root(self):
        tree = parse_newick(FIG1)
        smaller = drop_tip(tree, "C")
        assert smaller.n_tips == 2
        assert set(smaller.tip_labels) == {"A", "B"}
        np.testing.assert_allclose(np.sort(smaller.branch_length[:2]), [1, 1])

    def test_guards(self):
        with pytest.raises(DataError):
            drop_tip(parse_newick("(A:1,B:2);"), "A")
        with pytest.raises(DataError):
            drop_tip(parse_newick(FIG1), "Z")
