namespace peftcl {}
