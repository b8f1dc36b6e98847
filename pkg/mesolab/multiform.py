from collections import OrderedDict
from itertools import chain
from typing import Any, Iterator

from django.core.exceptions import NON_FIELD_ERRORS, ValidationError
from django.forms import BaseForm, Field
from django.forms.utils import ErrorDict, ErrorList

from .exceptions import ConfigurationError
from .forms import error_messages


class MultiForm:
    """
    A container that validates several forms bound to the same flat data as
    one form.  Each child form picks the keys it declares; keys nobody declares
    are reported as errors, and ``clean`` checks constraints spanning forms.
    """

    form_classes: dict[str, type[BaseForm]] = {}

    def __init__(self, data=None, *args, **kwargs) -> None:
        self.data = data
        kwargs.update(data=data)

        self.initials: dict[str, Any] = kwargs.pop("initial", None)
        if self.initials is None:
            self.initials = {}
        self.forms: OrderedDict[str, BaseForm] = OrderedDict()
        self.crossform_errors: list[ValidationError] = []
        self._errors: ErrorDict | None = None

        for key, form_class in self.form_classes.items():
            fargs, fkwargs = self.get_form_args_kwargs(key, args, kwargs)
            self.forms[key] = form_class(*fargs, **fkwargs)

    def get_form_args_kwargs(self, key: str, args, kwargs) -> tuple:
        """
        Returns the args and kwargs for initializing one of our form children.
        """
        fkwargs = kwargs.copy()
        fkwargs.update(initial=self.initials.get(key))
        return args, fkwargs

    def __str__(self) -> str:
        return self.as_text()

    def __getitem__(self, key: str) -> BaseForm:
        """
        Returns a form associated with the key, unlike forms this doesn't return a boundfield
        """
        try:
            form = self.forms[key]
        except KeyError:
            raise KeyError(
                "Form '%s' not found in '%s'. Choices are: %s."
                % (
                    key,
                    self.__class__.__name__,
                    ", ".join(sorted(self.forms)),
                )
            )
        return form

    @property
    def errors(self) -> ErrorDict | None:
        if self._errors is None:
            self.full_clean()
        return self._errors

    @property
    def fields(self) -> OrderedDict[str, Field]:
        fields = OrderedDict()
        for form in self.forms.values():
            fields.update(form.fields)
        return fields

    def __iter__(self) -> Iterator:
        return chain.from_iterable(self.forms.values())

    @property
    def is_bound(self) -> bool:
        return any(form.is_bound for form in self.forms.values())

    def full_clean(self) -> None:
        self._errors = ErrorDict()
        self.crossform_errors = []

        if not self.is_bound:
            return

        for form in self.forms.values():
            for field_name, error in form.errors.items():
                if field_name != NON_FIELD_ERRORS:
                    self._errors[field_name] = error

        unknown = sorted(set(self.data) - set(self.fields))
        if unknown:
            self.add_crossform_error(
                ValidationError(
                    "Unknown key(s): %(keys)s.", code="unknown", params={"keys": ", ".join(unknown)}
                )
            )

        if all(form.is_valid() for form in self.forms.values()):
            try:
                cleaned_data = self.clean()
            except ValidationError as e:
                self.add_crossform_error(e)
            else:
                if cleaned_data is not None:
                    self.cleaned_data = cleaned_data

        for form in self.forms.values():
            self.crossform_errors.extend(form.non_field_errors().as_data())
        if len(self.crossform_errors) > 0:
            self._errors[NON_FIELD_ERRORS] = self.error_class(self.crossform_errors)

    error_class = ErrorList

    def clean(self) -> dict[str, Any]:
        """
        Raises any ValidationErrors required for cross form validation. Should
        return a dict of cleaned_data objects for any forms whose data should
        be overridden.
        """
        return self.cleaned_data

    def add_crossform_error(self, e) -> None:
        self.crossform_errors.append(e)

    def is_valid(self) -> bool:
        if not self.is_bound:
            return False

        # trigger full_clean once
        self.errors

        forms_valid = all(form.is_valid() for form in self.forms.values())

        return forms_valid and not self.crossform_errors

    def non_field_errors(self) -> ErrorList:
        return self.errors.get(NON_FIELD_ERRORS, self.error_class())

    def as_text(self) -> str:
        return "\n\n".join(form.as_text() for form in self.forms.values())

    def error_report(self) -> str:
        lines = []
        for name, errors in self.errors.items():
            label = "config" if name == NON_FIELD_ERRORS else name
            lines.extend("{0}: {1}".format(label, message) for message in error_messages(errors))
        return "\n".join(lines)

    def cleaned_or_raise(self) -> dict[str, Any]:
        if not self.is_valid():
            raise ConfigurationError(self.error_report())
        return self.flat_cleaned_data

    @property
    def cleaned_data(self) -> OrderedDict[str, dict[str, Any]]:
        """
        Only valid form's data is returned.
        """
        return OrderedDict(
            (key, form.cleaned_data) for key, form in self.forms.items() if form.is_valid()
        )

    @cleaned_data.setter
    def cleaned_data(self, data: dict[str, Any]) -> None:
        for key, value in data.items():
            self[key].cleaned_data = value

    @property
    def flat_cleaned_data(self) -> dict[str, Any]:
        flat = {}
        for values in self.cleaned_data.values():
            flat.update(values)
        return flat
