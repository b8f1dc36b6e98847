"""
Fieldset-aware Django forms for flat key-value configuration.

Fields are grouped into (possibly nested) fieldsets declared on
``Meta.fieldsets``; the groups drive the documented schema printed by the
command line and the error report of a rejected configuration.
"""

from collections import Counter, OrderedDict
from collections.abc import Iterable

from django import forms
from django.core.exceptions import NON_FIELD_ERRORS, ValidationError
from django.forms.utils import ErrorDict, ErrorList

from .cumulants import parse_complex
from .exceptions import ConfigurationError


def error_messages(errors):
    for error in ErrorList(errors).as_data():
        yield from error.messages


class FieldErrorMixin:
    """
    Form mixin for easier field based error messages.
    """

    def field_error(self, name, error):
        self._errors = self._errors or ErrorDict()
        self._errors.setdefault(name, self.error_class())
        self._errors[name].append(error)

    def form_error(self, error):
        self.field_error(NON_FIELD_ERRORS, error)


def process_fieldset_row(fields, fieldset_class, base_name):
    for index, row in enumerate(fields):
        if not isinstance(row, (str, Fieldset)):
            if len(row) == 2 and isinstance(row[0], str) and isinstance(row[1], dict):
                row = fieldset_class(row[0], **row[1])
            else:
                row = fieldset_class("{0}_{1}".format(base_name, index), fields=row)
        yield row


def flatten(elements):
    """
    Flattens a mixed list of strings and iterables of strings into a single
    iterable of strings.
    """
    for element in elements:
        if isinstance(element, Iterable) and not isinstance(element, str):
            yield from flatten(element)
        else:
            yield element


def flatten_to_tuple(elements):
    return tuple(flatten(elements))


class Fieldset:
    def __init__(self, name, fields=(), **kwargs):
        self.name = name
        self.base_fields = tuple(process_fieldset_row(fields, type(self), name))
        self.legend = kwargs.pop("legend", None)
        self.description = kwargs.pop("description", "")
        names = [str(thing) for thing in self.base_fields]
        duplicates = [x for x, y in Counter(names).items() if y > 1]
        if duplicates:
            raise AttributeError(
                "Name Conflict in fieldset `{0}`.  The name(s) `{1}` appear multiple times.".format(
                    self.name, duplicates
                )
            )
        for key, value in kwargs.items():
            setattr(self, key, value)

    def __iter__(self):
        return iter(self.base_fields)

    def __bool__(self):
        return bool(self.base_fields)

    def __str__(self):
        return self.name

    @property
    def fields(self):
        return flatten_to_tuple(self)


def describe_field(name, field):
    kind = type(field).__name__.replace("Field", "").lower() or "text"
    line = "  {0} ({1})".format(name, kind)
    if field.initial not in (None, ""):
        line += " = {0}".format(field.initial)
    elif field.required:
        line += " [required]"
    if field.help_text:
        line += "\n      {0}".format(field.help_text)
    return line


class BoundFieldset:
    is_fieldset = True

    def __init__(self, form, fieldset, name):
        self.form = form
        self.name = name
        self.fieldset = fieldset
        self.rows = OrderedDict()
        for row in fieldset:
            self.rows[str(row)] = row

    def __getitem__(self, key):
        """
        >>> fieldset[1]
        # returns the item at index-1 in the fieldset
        >>> fieldset['name']
        # returns the item in the fieldset under the key 'name'
        """
        if isinstance(key, int) and key not in self.rows:
            return self[list(self.rows.keys())[key]]
        value = self.rows[key]
        if isinstance(value, str):
            return self.form[value]
        return type(self)(self.form, value, key)

    def __iter__(self):
        for name in self.rows.keys():
            yield self[name]

    def __str__(self):
        return self.as_text()

    @property
    def errors(self):
        errors = self.form.error_class()
        for name in flatten_to_tuple(self.fieldset):
            errors.extend(self.form.errors.get(name, []))
        return errors

    @property
    def legend(self):
        return getattr(self.fieldset, "legend", None)

    def as_text(self):
        lines = []
        if self.legend:
            lines.append("[{0}]".format(self.legend))
            if self.fieldset.description:
                lines.append("  {0}".format(self.fieldset.description))
        for item in self:
            if getattr(item, "is_fieldset", False):
                lines.append(item.as_text())
            else:
                lines.append(describe_field(item.name, item.field))
        return "\n".join(lines)


class FieldsetMixin(FieldErrorMixin):
    fieldset_class = Fieldset
    bound_fieldset_class = BoundFieldset
    base_fieldsets = None

    @property
    def fieldsets(self):
        if self.base_fieldsets is None:
            return self.bound_fieldset_class(self, self.fields.keys(), "__base_fieldset__")
        return self.bound_fieldset_class(self, self.base_fieldsets, self.base_fieldsets.name)

    def __getitem__(self, key):
        try:
            return super().__getitem__(key)
        except KeyError:
            return self.fieldsets[key]

    def __iter__(self):
        yield from self.fieldsets

    def __str__(self):
        return self.as_text()

    def as_text(self):
        return self.fieldsets.as_text()

    def error_report(self):
        """
        One ``key: message`` line per error, grouped as the fieldsets are.
        """
        lines = []
        for name, errors in self.errors.items():
            label = "config" if name == NON_FIELD_ERRORS else name
            lines.extend("{0}: {1}".format(label, message) for message in error_messages(errors))
        return "\n".join(lines)


def get_fieldsets(bases, attrs):
    try:
        return attrs["Meta"].fieldsets
    except (KeyError, AttributeError):
        for base in bases:
            fieldsets = getattr(base, "base_fieldsets", None)
            if fieldsets is not None:
                return fieldsets
    return None


def get_fieldset_class(bases, attrs):
    if "fieldset_class" in attrs:
        return attrs["fieldset_class"]
    for base in bases:
        try:
            return base.fieldset_class
        except AttributeError:
            continue
    return Fieldset


class BetterFormMetaClass(forms.forms.DeclarativeFieldsMetaclass):
    def __new__(cls, name, bases, attrs):
        base_fieldsets = get_fieldsets(bases, attrs)
        if base_fieldsets is not None and not isinstance(base_fieldsets, Fieldset):
            FieldsetClass = get_fieldset_class(bases, attrs)
            base_fieldsets = FieldsetClass("__base_fieldset__", fields=base_fieldsets)
        attrs["base_fieldsets"] = base_fieldsets
        return super().__new__(cls, name, bases, attrs)


class BetterForm(FieldsetMixin, forms.forms.BaseForm, metaclass=BetterFormMetaClass):
    """
    A form whose fields are grouped by ``Meta.fieldsets``.

    Unbound fields fall back to their ``initial`` value, so a configuration
    file only needs the keys it changes.
    """

    def __init__(self, data=None, *args, **kwargs):
        if data is not None:
            data = dict(data)
            for name, field in self.base_fields.items():
                if name not in data and field.initial is not None:
                    data[name] = field.prepare_value(field.initial)
        super().__init__(data, *args, **kwargs)

    def cleaned_or_raise(self):
        if not self.is_valid():
            raise ConfigurationError(self.error_report())
        return self.cleaned_data


class ComplexField(forms.Field):
    default_error_messages = {"invalid": "Enter a complex number such as `i` or `0.5+2i`."}

    def to_python(self, value):
        if value in self.empty_values:
            return None
        if isinstance(value, complex):
            return value
        try:
            return parse_complex(str(value))
        except ConfigurationError:
            raise ValidationError(self.error_messages["invalid"], code="invalid")

    def prepare_value(self, value):
        if isinstance(value, complex):
            return "{0!r}".format(value).strip("()")
        return value


class SequenceField(forms.Field):
    """
    A comma-separated list of values of ``item_type``.
    """

    item_type = str
    default_error_messages = {"invalid": "Enter a comma-separated list."}

    def __init__(self, *args, min_items=1, **kwargs):
        self.min_items = min_items
        super().__init__(*args, **kwargs)

    def to_python(self, value):
        if value in self.empty_values:
            return []
        if isinstance(value, (list, tuple)):
            items = value
        else:
            items = [item for item in str(value).split(",") if item.strip()]
        try:
            return [self.item_type(str(item).strip()) for item in items]
        except ValueError:
            raise ValidationError(self.error_messages["invalid"], code="invalid")

    def validate(self, value):
        super().validate(value)
        if len(value) < self.min_items:
            raise ValidationError(
                "Enter at least %(count)d values.", code="min_items", params={"count": self.min_items}
            )

    def prepare_value(self, value):
        if isinstance(value, (list, tuple)):
            return ",".join(str(item) for item in value)
        return value


class IntegerListField(SequenceField):
    item_type = int
    default_error_messages = {"invalid": "Enter a comma-separated list of integers."}


class FloatListField(SequenceField):
    item_type = float
    default_error_messages = {"invalid": "Enter a comma-separated list of numbers."}
