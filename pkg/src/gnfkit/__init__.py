"""gnfkit: reasoning tools for guarded rules over relational instances.

Submodules:
  model    instances, homomorphisms, products, squid extensions
  query    conjunctive queries: evaluation, containment, cores, treeification
  logic    first-order formulas, guardedness checks, countermodel search
  tgd      tuple-generating dependencies: classes, specializations
  chase    chase procedure and entailment oracles
  datalog  Datalog programs, least-fixpoint evaluation, guardedness classes
  rewrite  certain-answer compilation into Datalog
  bisim    guarded and strong guarded-negation bisimulations, amalgamation
  syntax   text formats for theories, instances, queries, programs, formulas
  cli      command-line interface
"""

__version__ = "0.1.0"
