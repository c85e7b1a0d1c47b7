# Linked-twist constructions for the saddle and cusp families
