"""Rooted binary phylogenies: Newick I/O, traversals, dense tree covariance.

Node indexing convention (0-based): tips occupy ``0 .. N-1`` in Newick
left-to-right order, internal nodes occupy ``N .. 2N-3`` in post-order
completion order, and the root is ``2N-2``.  This makes every parent index
larger than its children's indices, so a plain index sort is a post-order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NewickError

_RESERVED = set("():,;")


class _Clade:
    """Mutable node used while building a tree (parsing, simulation, surgery)."""

    __slots__ = ("label", "children", "length")

    def __init__(self, label=None, children=None, length=None):
        self.label = label
        self.children = children or []
        self.length = length

    @property
    def is_tip(self):
        return not self.children


@dataclass(frozen=True)
class Phylogeny:
    """Rooted bifurcating tree with branch lengths.

    Attributes
    ----------
    n_tips:
        Number of terminal taxa N.  The tree has ``2N - 1`` nodes.
    parent:
        ``(2N-1,)`` int array; ``parent[root] == -1``.
    children:
        ``(2N-1, 2)`` int array; ``-1`` entries for tips.
    branch_length:
        ``(2N-1,)`` float array of lengths of the edge above each node,
        in time units; the root entry is 0 and unused (the root prior
        plays that role).
    tip_labels:
        Taxon names, index-aligned with tips ``0 .. N-1``.
    internal_labels:
        Labels found on internal nodes in the Newick source; preserved
        but never used by any computation.
    """

    n_tips: int
    parent: np.ndarray
    children: np.ndarray
    branch_length: np.ndarray
    tip_labels: tuple[str, ...]
    internal_labels: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.parent, self.children, self.branch_length):
            arr.setflags(write=False)
        self._validate()

    @property
    def n_nodes(self) -> int:
        return 2 * self.n_tips - 1

    @property
    def root(self) -> int:
        return self.n_nodes - 1

    def is_tip(self, k: int) -> bool:
        return k < self.n_tips

    def _validate(self):
        n = self.n_tips
        if n < 2:
            raise NewickError("a phylogeny needs at least 2 tips")
        if len(self.tip_labels) != n:
            raise DataError("tip_labels length does not match n_tips")
        if len(set(self.tip_labels)) != n:
            raise NewickError("duplicate tip labels")
        for lab in self.tip_labels:
            if not lab or any(c in _RESERVED for c in lab):
                raise DataError(f"invalid tip label {lab!r}")
        if self.parent.shape != (self.n_nodes,) or self.children.shape != (self.n_nodes, 2):
            raise DataError("malformed topology arrays")
        if self.parent[self.root] != -1:
            raise DataError("root must have no parent")
        if np.any(self.branch_length[: self.root] < 0):
            raise DataError("negative branch length")
        # every parent index exceeds its children's (post-order numbering)
        kids = self.children[n:]
        if np.any(kids < 0) or np.any(kids >= np.arange(n, self.n_nodes)[:, None]):
            raise DataError("children must precede parents in index order")

    def postorder(self) -> np.ndarray:
        """Post-order node sequence: children strictly before parents, root last.

        The tree walk is left-child-first and deterministic given the tree.
        """
        order = np.empty(self.n_nodes, dtype=np.int64)
        pos = 0
        stack = [(self.root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded or self.is_tip(node):
                order[pos] = node
                pos += 1
            else:
                stack.append((node, True))
                a, b = self.children[node]
                stack.append((int(b), False))
                stack.append((int(a), False))
        return order

    def preorder(self) -> np.ndarray:
        """Exact reverse of :meth:`postorder`; root first, parents before children."""
        return self.postorder()[::-1]

    def to_newick(self) -> str:
        """Serialize with branch lengths at 17 significant digits."""
        parts = [""] * self.n_nodes
        for k in self.postorder():
            k = int(k)
            if self.is_tip(k):
                parts[k] = f"{self.tip_labels[k]}:{self.branch_length[k]:.17g}"
            elif k == self.root:
                a, b = self.children[k]
                parts[k] = f"({parts[a]},{parts[b]});"
            else:
                a, b = self.children[k]
                parts[k] = f"({parts[a]},{parts[b]}):{self.branch_length[k]:.17g}"
        return parts[self.root]

    def depths(self) -> np.ndarray:
        """Root-to-node path lengths (sums of branch lengths), per node."""
        d = np.zeros(self.n_nodes)
        for k in self.preorder()[1:]:
            d[k] = d[self.parent[k]] + self.branch_length[k]
        return d

    def tips_below(self) -> list[np.ndarray]:
        """For each node, the sorted tip indices of its subtree."""
        below: list = [None] * self.n_nodes
        for k in self.postorder():
            k = int(k)
            if self.is_tip(k):
                below[k] = np.array([k], dtype=np.int64)
            else:
                a, b = self.children[k]
                below[k] = np.sort(np.concatenate([below[a], below[b]]))
        return below


@dataclass(frozen=True)
class DenseTreeCovariance:
    """Dense N-by-N tree covariance (oracle use only; O(N^2) memory)."""

    psi: np.ndarray
    psi_tilde: np.ndarray


def traversal(tree: Phylogeny, order: str = "post") -> np.ndarray:
    """Node visit sequence, ``order`` in {"post", "pre"}."""
    if order == "post":
        return tree.postorder()
    if order == "pre":
        return tree.preorder()
    raise ValueError(f"unknown traversal order {order!r}")


def _finalize(root: _Clade) -> Phylogeny:
    """Assign canonical indices to a built clade tree and freeze it."""
    tips: list[_Clade] = []
    internals: list[_Clade] = []
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if node.is_tip:
            tips.append(node)
        elif expanded:
            internals.append(node)
        else:
            if len(node.children) != 2:
                raise NewickError(
                    f"non-binary vertex with {len(node.children)} children (polytomy)"
                )
            stack.append((node, True))
            stack.append((node.children[1], False))
            stack.append((node.children[0], False))

    n = len(tips)
    if n < 2:
        raise NewickError("a phylogeny needs at least 2 tips")
    labels = []
    for t in tips:
        if not t.label:
            raise NewickError("tip without a label")
        labels.append(t.label)
    if len(set(labels)) != n:
        dup = sorted({x for x in labels if labels.count(x) > 1})
        raise NewickError(f"duplicate tip labels: {dup}")

    index: dict[int, int] = {}
    for i, t in enumerate(tips):
        index[id(t)] = i
    for j, nd in enumerate(internals):
        index[id(nd)] = n + j

    n_nodes = 2 * n - 1
    parent = np.full(n_nodes, -1, dtype=np.int64)
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    blen = np.zeros(n_nodes)
    internal_labels: dict[int, str] = {}
    for nd in internals:
        k = index[id(nd)]
        a, b = (index[id(c)] for c in nd.children)
        children[k] = (a, b)
        parent[a] = k
        parent[b] = k
    for nd in tips + internals:
        k = index[id(nd)]
        if nd.label and not nd.is_tip:
            internal_labels[k] = nd.label
        if k == n_nodes - 1:
            continue  # root branch length, if any, is ignored
        if nd.length is None:
            raise NewickError(f"missing branch length on a non-root edge (node {nd.label or k})")
        blen[k] = nd.length
    return Phylogeny(
        n_tips=n,
        parent=parent,
        children=children,
        branch_length=blen,
        tip_labels=tuple(labels),
        internal_labels=internal_labels,
    )


def parse_newick(text: str) -> Phylogeny:
    """Parse one ';'-terminated Newick expression into a :class:`Phylogeny`.

    Branch lengths are required on all non-root edges; a length on the
    root is accepted and ignored.  Internal-node labels are preserved in
    ``internal_labels`` but never used.  Polytomies, duplicate tip labels
    and trees with fewer than two tips are rejected.
    """
    s = text.strip()
    if not s:
        raise NewickError("empty Newick input")
    end = s.find(";")
    if end == -1:
        raise NewickError("missing ';' terminator")
    if s[end + 1 :].strip():
        raise NewickError("trailing text after ';'")
    s = s[:end]

    i, n_chars = 0, len(s)

    def read_label():
        nonlocal i
        j = i
        while j < n_chars and s[j] not in _RESERVED and not s[j].isspace():
            j += 1
        lab = s[i:j]
        i = j
        return lab

    def read_length():
        nonlocal i
        j = i
        while j < n_chars and s[j] not in _RESERVED and not s[j].isspace():
            j += 1
        tok = s[i:j]
        try:
            val = float(tok)
        except ValueError:
            raise NewickError(f"invalid branch length {tok!r}") from None
        i = j
        return val

    stack: list[list[_Clade]] = []
    current: _Clade | None = None
    while True:
        while i < n_chars and s[i].isspace():
            i += 1
        if i >= n_chars:
            break
        c = s[i]
        if c == "(":
            stack.append([])
            current = None
            i += 1
        elif c == ",":
            if not stack:
                raise NewickError("',' outside parentheses")
            if current is None:
                raise NewickError("empty subtree before ','")
            stack[-1].append(current)
            current = None
            i += 1
        elif c == ")":
            if not stack:
                raise NewickError("unbalanced parentheses")
            if current is None:
                raise NewickError("empty subtree before ')'")
            kids = stack.pop()
            kids.append(current)
            current = _Clade(children=kids)
            i += 1
            lab = read_label()
            if lab:
                current.label = lab
        elif c == ":":
            if current is None:
                raise NewickError("':' without a preceding node")
            if current.length is not None:
                raise NewickError("duplicate branch length")
            i += 1
            current.length = read_length()
        else:
            if current is not None:
                raise NewickError(f"unexpected token near {s[i:i+12]!r}")
            lab = read_label()
            if not lab:
                raise NewickError(f"unexpected character {c!r}")
            current = _Clade(label=lab)
    if stack:
        raise NewickError("unbalanced parentheses")
    if current is None or current.is_tip:
        raise NewickError("a phylogeny needs at least 2 tips")
    return _finalize(current)


def build_psi(tree: Phylogeny, kappa: float) -> DenseTreeCovariance:
    """Dense tree covariance Psi and Psi + J/kappa.  O(N^2), oracle use only.

    ``psi[i, j]`` is the summed branch length of the shared root path of
    tips i and j (the root-to-MRCA path length; root-to-tip length on the
    diagonal).
    """
    if kappa <= 0:
        raise DataError("kappa must be positive")
    n = tree.n_tips
    depth = tree.depths()
    below = tree.tips_below()
    psi = np.zeros((n, n))
    psi[np.arange(n), np.arange(n)] = depth[:n]
    for k in range(n, tree.n_nodes):
        a, b = tree.children[k]
        ta, tb = below[a], below[b]
        psi[np.ix_(ta, tb)] = depth[k]
        psi[np.ix_(tb, ta)] = depth[k]
    return DenseTreeCovariance(psi=psi, psi_tilde=psi + 1.0 / kappa)


def _to_clades(tree: Phylogeny) -> _Clade:
    """Rebuild the mutable clade representation of an existing tree."""
    nodes = [
        _Clade(
            label=tree.tip_labels[k] if tree.is_tip(k) else tree.internal_labels.get(k),
            length=float(tree.branch_length[k]) if k != tree.root else None,
        )
        for k in range(tree.n_nodes)
    ]
    for k in range(tree.n_tips, tree.n_nodes):
        a, b = tree.children[k]
        nodes[k].children = [nodes[a], nodes[b]]
    return nodes[tree.root]


def drop_tip(tree: Phylogeny, label: str) -> Phylogeny:
    """Remove one taxon, suppressing the resulting degree-2 node.

    The removed tip's sibling inherits the summed branch length of its own
    edge plus the suppressed parent's edge.  If the parent is the root the
    sibling becomes the new root (its branch length is discarded).
    """
    if label not in tree.tip_labels:
        raise DataError(f"no tip labelled {label!r}")
    if tree.n_tips < 3:
        raise DataError("cannot drop a tip from a 2-taxon tree")
    tip = tree.tip_labels.index(label)
    par = int(tree.parent[tip])
    a, b = tree.children[par]
    sib = int(b if a == tip else a)

    clades = _to_clades(tree)
    # _to_clades rebuilds fresh objects, so locate them by a parallel walk
    lookup: dict[int, _Clade] = {}
    stack = [(tree.root, clades)]
    while stack:
        k, clade = stack.pop()
        lookup[k] = clade
        if not tree.is_tip(k):
            a2, b2 = tree.children[k]
            stack.append((int(a2), clade.children[0]))
            stack.append((int(b2), clade.children[1]))

    sib_clade = lookup[sib]
    if par == tree.root:
        sib_clade.length = None
        return _finalize(sib_clade)
    sib_clade.length = float(tree.branch_length[sib] + tree.branch_length[par])
    grand = lookup[int(tree.parent[par])]
    grand.children = [sib_clade if c is lookup[par] else c for c in grand.children]
    return _finalize(lookup[tree.root])
