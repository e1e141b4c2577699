from .dims import (
    PRE, POST, RETURN_VAR, Dim, ProgVar, Sym, BoundApp, ExpDim, LogDim, MulDim,
    LinTerm, var, sym, const, dim_term, dim_key, exp_term, log_term, mul_term,
    subst_term, from_key, base_dims, is_nonlin,
)
from .sat import LE, LT, EQ, ResourceLimit
from .formula import (
    Atom, Tree, TransitionFormula, TRUE, FALSE, atom, f_atom, f_and, f_or,
    f_atoms, tf, identity, false_tf, compose, disjoin, disjoin_all,
    substitute_tf, substitute_tree, negate_tree, iter_cubes, select_cube,
    eval_tree, tree_dims, to_sexpr, frame_atoms, Gensym,
)
from .polyhedron import (
    Polyhedron, bottom, top, make_poly, project, join, join_all,
    entails_atom, entails_poly, poly_feasible, drop_redundant,
)
from .hull import (
    abstract_hull, hull_multi, project_formula, is_sat, find_model,
    strengthen_cube, tree_entails_atom, tree_entails_tree, tf_entails,
    tf_equivalent, set_hull_iters,
)
