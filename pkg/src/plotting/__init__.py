# Phase portrait rendering
